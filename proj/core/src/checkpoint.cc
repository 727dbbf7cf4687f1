#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "isofed/errors.h"
#include "isofed/model.h"

namespace isofed::checkpoint {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    T value;
    take(&value, sizeof(T), what);
    return value;
  }

  void take(void* dst, std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n)
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const std::vector<ParamEntry>& entries) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint16_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (std::size_t d : e.shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(e.values.data());
    out.insert(out.end(), p, p + e.values.size() * sizeof(double));
  }
  return out;
}

std::vector<ParamEntry> decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not an ISOP checkpoint (bad magic)");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("entry count");
  std::vector<ParamEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamEntry e;
    e.name.resize(r.get<std::uint32_t>("name length"));
    r.take(e.name.data(), e.name.size(), "name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) throw FormatError("entry '" + e.name + "' has invalid rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.get<std::uint32_t>("dims");
      if (dim == 0) throw FormatError("entry '" + e.name + "' has a zero dimension");
      e.shape.push_back(dim);
      n *= dim;
    }
    e.values.resize(n);
    r.take(e.values.data(), n * sizeof(double), "values");
    entries.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint entries");
  return entries;
}

void write(const std::filesystem::path& path, const std::vector<ParamEntry>& entries) {
  const auto bytes = encode(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<ParamEntry> read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open checkpoint");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace isofed::checkpoint
