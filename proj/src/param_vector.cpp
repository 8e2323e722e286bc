#include "meco/param_vector.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace meco {

namespace {
// Checkpoints are little-endian on disk regardless of host order.
std::uint64_t to_le(double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
  return u;
}
double from_le(std::uint64_t u) {
  if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap64(u);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const ParamVector& params,
                     const std::string& note) {
  nlohmann::json header;
  header["format"] = "meco-params-v1";
  if (!note.empty()) header["note"] = note;
  header["count"] = params.size();
  auto& slices = header["layout"] = nlohmann::json::array();
  for (const auto& s : params.layout().slices()) {
    slices.push_back({{"name", s.name},
                      {"offset", s.offset},
                      {"len", s.len},
                      {"rows", s.rows},
                      {"cols", s.cols}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot open checkpoint for writing: " + path);
  out << header.dump() << '\n';
  for (double v : params.flat()) {
    std::uint64_t u = to_le(v);
    out.write(reinterpret_cast<const char*>(&u), 8);
  }
}

ParamVector load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open checkpoint: " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.value("format", "") != "meco-params-v1")
    throw input_error("unrecognized checkpoint format in " + path);
  ParamLayout layout;
  for (const auto& s : header.at("layout"))
    layout.add(s.at("name").get<std::string>(), s.at("len").get<std::size_t>(),
               s.at("rows").get<std::size_t>(), s.at("cols").get<std::size_t>());
  const std::size_t count = header.at("count").get<std::size_t>();
  if (count != layout.total()) throw input_error("checkpoint layout does not cover payload");
  ParamVector params(std::move(layout));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t u;
    in.read(reinterpret_cast<char*>(&u), 8);
    if (!in) throw input_error("truncated checkpoint: " + path);
    params[i] = from_le(u);
  }
  return params;
}

}  // namespace meco
