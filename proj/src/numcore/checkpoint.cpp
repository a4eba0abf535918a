#include "red/numcore/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "red/error.hpp"
#include "../text_util.hpp"

namespace red::nc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'E', 'D', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

}  // namespace

std::string encode_checkpoint(const CheckpointData& data) {
  nlohmann::json header;
  header["meta"] = data.meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : data.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}, {"offset", offset}, {"count", t.size()}});
    offset += t.size();
  }
  const std::string text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + offset * sizeof(Real));
  for (const auto& [name, t] : data.tensors)
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(Real));
  return out;
}

CheckpointData decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw ValidationError("not a checkpoint (bad magic)");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, 8);
  if (header_len > bytes.size() - 16) throw ValidationError("truncated checkpoint header");
  const auto header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len),
                                            nullptr, false);
  if (header.is_discarded() || !header.contains("tensors")) throw ValidationError("corrupt checkpoint header");
  const std::size_t payload = 16 + header_len;
  CheckpointData data;
  data.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header["tensors"]) {
    const auto rows = entry["shape"][0].get<std::size_t>();
    const auto cols = entry["shape"][1].get<std::size_t>();
    const auto offset = entry["offset"].get<std::size_t>();
    const auto count = entry["count"].get<std::size_t>();
    if (count != rows * cols) throw ValidationError("checkpoint tensor count does not match shape");
    if (payload + (offset + count) * sizeof(Real) > bytes.size()) throw ValidationError("truncated checkpoint payload");
    std::vector<Real> values(count);
    std::memcpy(values.data(), bytes.data() + payload + offset * sizeof(Real), count * sizeof(Real));
    data.tensors.emplace(entry["name"].get<std::string>(), Tensor(rows, cols, std::move(values)));
  }
  return data;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
  const auto bytes = encode_checkpoint(data);
  detail::write_atomically(path, [&](std::ostream& out) { out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); });
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace red::nc
