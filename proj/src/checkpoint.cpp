#include "emte/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "emte/error.hpp"

namespace emte {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t crc32_of_file(const std::filesystem::path& path) {
  return crc32_of(read_bytes(path));
}

void write_checkpoint(const std::filesystem::path& path, nlohmann::json meta,
                      const std::vector<Tensor>& tensors) {
  std::vector<std::uint8_t> blob;
  nlohmann::json shapes = nlohmann::json::array();
  for (const Tensor& t : tensors) {
    shapes.push_back(t.shape());
    for (double v : t.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) blob.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  std::filesystem::path blob_path = path;
  blob_path += ".bin";
  meta["tensor_shapes"] = shapes;
  meta["blob"] = blob_path.filename().string();
  meta["blob_bytes"] = blob.size();
  meta["blob_crc32"] = hex32(crc32_of(blob));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream bin(blob_path, std::ios::binary);
  bin.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size()));
  std::ofstream js(path);
  js << meta.dump(2) << "\n";
  if (!bin || !js) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck;
  {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    try {
      ck.meta = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed checkpoint metadata: " + std::string(e.what()));
    }
  }
  std::filesystem::path blob_path = path.parent_path() / ck.meta.at("blob").get<std::string>();
  const auto blob = read_bytes(blob_path);
  if (hex32(crc32_of(blob)) != ck.meta.at("blob_crc32").get<std::string>()) {
    throw DataError("checkpoint blob checksum mismatch: " + blob_path.string());
  }
  std::size_t offset = 0;
  for (const auto& shape_json : ck.meta.at("tensor_shapes")) {
    const auto shape = shape_json.get<std::vector<std::size_t>>();
    const std::size_t n = shape_product(shape);
    if (offset + 8 * n > blob.size()) throw DataError("checkpoint blob truncated");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) {
        bits |= static_cast<std::uint64_t>(blob[offset + 8 * i + b]) << (8 * b);
      }
      data[i] = std::bit_cast<double>(bits);
    }
    offset += 8 * n;
    ck.tensors.emplace_back(shape, std::move(data));
  }
  if (offset != blob.size()) throw DataError("checkpoint blob has trailing bytes");
  return ck;
}

}  // namespace emte
