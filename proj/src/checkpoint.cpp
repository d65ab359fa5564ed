#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "linoss/train.hpp"

namespace linoss {

// Layout (little-endian):
//   "LNOS" | u32 version | u64 len, config text | u64 epoch | u64 adam step
//   | u64 len, rng text | u64 array count | arrays
// array = u32 name len, name | u32 rank | u64 dims[rank] | f64 values
// Arrays: the model parameters in named_arrays order, then "adam.m.<name>"
// and "adam.v.<name>" in the same order.

namespace {

static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str64(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  std::vector<char> take() { return std::move(out_); }

 private:
  std::vector<char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& b) : b_(b) {}
  void bytes(void* p, std::size_t n) {
    if (n > b_.size() - pos_) throw std::runtime_error("checkpoint: truncated file");
    std::memcpy(p, b_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str(std::uint64_t n) {
    if (n > b_.size() - pos_) throw std::runtime_error("checkpoint: truncated file");
    std::string s(b_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<char>& b_;
  std::size_t pos_ = 0;
};

void write_array(Writer& w, const std::string& name, const ConstArrayRef& a) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.u32(static_cast<std::uint32_t>(a.shape.size()));
  for (auto d : a.shape) w.u64(d);
  w.bytes(a.values.data(), a.values.size() * sizeof(double));
}

void read_array(Reader& r, const std::string& name, const ArrayRef& a) {
  const std::string got = r.str(r.u32());
  if (got != name) throw std::runtime_error("checkpoint: expected array " + name + ", found " + got);
  const std::uint32_t rank = r.u32();
  if (rank != a.shape.size()) throw std::runtime_error("checkpoint: rank mismatch in " + name);
  for (auto d : a.shape)
    if (r.u64() != d) throw std::runtime_error("checkpoint: shape mismatch in " + name);
  r.bytes(a.values.data(), a.values.size() * sizeof(double));
}

}  // namespace

std::vector<char> serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.bytes("LNOS", 4);
  w.u32(kCheckpointVersion);
  w.str64(format_config(ck.config));
  w.u64(ck.epoch);
  w.u64(ck.adam.step);
  w.str64(ck.rng_state);
  const auto p = named_arrays(ck.params);
  const auto m = named_arrays(ck.adam.m);
  const auto v = named_arrays(ck.adam.v);
  w.u64(3 * p.size());
  for (const auto& a : p) write_array(w, a.name, a);
  for (const auto& a : m) write_array(w, "adam.m." + a.name, a);
  for (const auto& a : v) write_array(w, "adam.v." + a.name, a);
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::vector<char>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "LNOS", 4) != 0) throw std::runtime_error("checkpoint: bad magic bytes");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: format version " + std::to_string(version) +
                             " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  ck.config = parse_config(r.str(r.u64()));
  validate(ck.config, false);
  ck.epoch = r.u64();
  const std::uint64_t step = r.u64();
  ck.rng_state = r.str(r.u64());
  Rng dummy(0);
  ck.params = init_model(ck.config.dims(), ck.config.dt, ck.config.init_mode,
                         ck.config.param_mode, dummy);
  ck.adam = make_adam(ck.params);
  ck.adam.step = step;
  auto p = named_arrays(ck.params);
  auto m = named_arrays(ck.adam.m);
  auto v = named_arrays(ck.adam.v);
  if (r.u64() != 3 * p.size()) throw std::runtime_error("checkpoint: array count mismatch");
  for (const auto& a : p) read_array(r, a.name, a);
  for (const auto& a : m) read_array(r, "adam.m." + a.name, a);
  for (const auto& a : v) read_array(r, "adam.v." + a.name, a);
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ck);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace linoss
