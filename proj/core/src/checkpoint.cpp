#include "rgcd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "rgcd/error.hpp"

namespace rgcd {

namespace {

constexpr char kMagic[8] = {'R', 'G', 'C', 'D', 'C', 'K', 'P', 'T'};

template <class T>
void put(std::vector<unsigned char>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

void put_bytes(std::vector<unsigned char>& out, const std::string& s) {
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }

  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

const ad::Array& CheckpointFile::get(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return b.value;
  }
  throw FormatError("checkpoint has no blob '" + name + "'");
}

bool CheckpointFile::has(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return true;
  }
  return false;
}

std::vector<unsigned char> encode_checkpoint(const CheckpointFile& file) {
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, file.version);
  put<std::uint64_t>(out, file.config_text.size());
  put_bytes(out, file.config_text);
  put<std::uint64_t>(out, file.step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(file.blobs.size()));
  for (const auto& b : file.blobs) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    put_bytes(out, b.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.value.rank()));
    for (auto e : b.value.shape()) put<std::uint64_t>(out, e);
    for (double v : b.value.values()) put_f64(out, v);
  }
  return out;
}

CheckpointFile decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (r.bytes(8, "magic") != std::string(kMagic, 8)) throw FormatError("not a checkpoint (bad magic)");
  CheckpointFile f;
  f.version = r.get<std::uint32_t>("version");
  if (f.version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(f.version));
  }
  f.config_text = r.bytes(r.get<std::uint64_t>("config length"), "config text");
  f.step = r.get<std::uint64_t>("step");
  const auto count = r.get<std::uint32_t>("blob count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Blob b;
    b.name = r.bytes(r.get<std::uint32_t>("name length"), "blob name");
    const auto rank = r.get<std::uint32_t>("rank");
    ad::Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.get<std::uint64_t>("extent"));
    std::vector<double> values(ad::numel(shape));
    for (auto& v : values) v = std::bit_cast<double>(r.get<std::uint64_t>("values"));
    b.value = ad::Array(std::move(shape), std::move(values));
    f.blobs.push_back(std::move(b));
  }
  if (!r.done()) throw FormatError("trailing bytes after the last checkpoint blob");
  return f;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
  const auto bytes = encode_checkpoint(file);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace rgcd
