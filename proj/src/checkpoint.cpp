#include "ssde/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "ssde/errors.hpp"

namespace ssde {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

enum class DType : uint8_t { f32 = 1, f64 = 2, u64 = 3, bytes = 4 };

constexpr char kMagic[4] = {'S', 'S', 'D', 'E'};
constexpr uint32_t kEndTag = 0x454e4421;  // "!DNE"

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void str(const std::string& s) {
    pod<uint8_t>(static_cast<uint8_t>(DType::bytes));
    pod<uint32_t>(1);
    pod<uint64_t>(s.size());
    raw(s.data(), s.size());
  }
  void matrix(const MatrixT<float>& m) {
    pod<uint8_t>(static_cast<uint8_t>(DType::f32));
    pod<uint32_t>(2);
    pod<uint64_t>(static_cast<uint64_t>(m.rows()));
    pod<uint64_t>(static_cast<uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) pod<float>(m(r, c));
  }
  void vector(const VectorT<float>& v) {
    pod<uint8_t>(static_cast<uint8_t>(DType::f32));
    pod<uint32_t>(1);
    pod<uint64_t>(static_cast<uint64_t>(v.size()));
    raw(v.data(), sizeof(float) * static_cast<std::size_t>(v.size()));
  }
  void bits(std::size_t rows, std::size_t cols, std::span<const uint64_t> words) {
    pod<uint8_t>(static_cast<uint8_t>(DType::u64));
    pod<uint32_t>(2);
    pod<uint64_t>(rows);
    pod<uint64_t>(cols);
    raw(words.data(), words.size() * sizeof(uint64_t));
  }
  void bits(const BitVector& b) { bits(1, b.size(), b.words()); }
  void bits(const BitMatrix& b) { bits(b.rows(), b.cols(), b.words()); }
  void params(const Params<float>& p) {
    pod<uint32_t>(static_cast<uint32_t>(p.size()));
    for (const auto& l : p) {
      matrix(l.weight);
      vector(l.bias);
    }
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string name) : buf_(std::move(data)), name_(std::move(name)) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void raw(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::vector<uint64_t> header(DType expect, uint32_t ndim) {
    const auto tag = pod<uint8_t>();
    if (tag != static_cast<uint8_t>(expect)) fail("unexpected array dtype tag " + std::to_string(tag));
    const auto nd = pod<uint32_t>();
    if (nd != ndim) fail("unexpected array rank " + std::to_string(nd));
    std::vector<uint64_t> shape(nd);
    for (auto& s : shape) {
      s = pod<uint64_t>();
      if (s > (uint64_t{1} << 32)) fail("array dimension too large");
    }
    return shape;
  }
  std::string str() {
    const auto shape = header(DType::bytes, 1);
    std::string s(shape[0], '\0');
    raw(s.data(), s.size());
    return s;
  }
  MatrixT<float> matrix() {
    const auto shape = header(DType::f32, 2);
    MatrixT<float> m(static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = pod<float>();
    return m;
  }
  VectorT<float> vector() {
    const auto shape = header(DType::f32, 1);
    VectorT<float> v(static_cast<Eigen::Index>(shape[0]));
    raw(v.data(), sizeof(float) * shape[0]);
    return v;
  }
  template <typename Bits>
  void fill_words(Bits& b) {
    auto w = b.words();
    raw(w.data(), w.size() * sizeof(uint64_t));
  }
  BitVector bitvector() {
    const auto shape = header(DType::u64, 2);
    if (shape[0] != 1) fail("bit vector must have one row");
    BitVector b(static_cast<std::size_t>(shape[1]));
    fill_words(b);
    if (!padding_clear(b.words(), b.size())) fail("bit vector padding is not zero");
    return b;
  }
  BitMatrix bitmatrix() {
    const auto shape = header(DType::u64, 2);
    BitMatrix b(static_cast<std::size_t>(shape[0]), static_cast<std::size_t>(shape[1]));
    fill_words(b);
    for (std::size_t r = 0; r < b.rows(); ++r)
      if (!padding_clear(b.words().subspan(r * b.stride(), b.stride()), b.cols())) fail("bit matrix row padding is not zero");
    return b;
  }
  Params<float> params() {
    const auto n = pod<uint32_t>();
    if (n > 64) fail("implausible layer count");
    Params<float> p(n);
    for (auto& l : p) {
      l.weight = matrix();
      l.bias = vector();
    }
    return p;
  }
  bool done() const { return pos_ == buf_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw format_error(name_ + ": corrupt checkpoint (" + what + ")");
  }

 private:
  static bool padding_clear(std::span<const uint64_t> words, std::size_t bits) {
    if (bits % 64 == 0 || words.empty()) return true;
    const std::size_t last = bits / 64;
    if ((words[last] >> (bits % 64)) != 0) return false;
    for (std::size_t i = last + 1; i < words.size(); ++i)
      if (words[i] != 0) return false;
    return true;
  }
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) fail("truncated");
  }

  std::vector<char> buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

void write_masks(Writer& w, const MaskSet& m) {
  w.pod<int32_t>(m.task_id);
  w.pod<uint32_t>(static_cast<uint32_t>(m.phi.size()));
  for (std::size_t l = 0; l < m.phi.size(); ++l) {
    w.bits(m.phi[l]);
    w.bits(m.phi_global[l]);
    w.bits(m.phi_local[l]);
    w.pod<uint64_t>(m.local_seeds[l]);
  }
}

MaskSet read_masks(Reader& r) {
  MaskSet m;
  m.task_id = r.pod<int32_t>();
  const auto n = r.pod<uint32_t>();
  if (n > 64) r.fail("implausible mask layer count");
  for (uint32_t l = 0; l < n; ++l) {
    m.phi.push_back(r.bitvector());
    m.phi_global.push_back(r.bitvector());
    m.phi_local.push_back(r.bitvector());
    m.local_seeds.push_back(r.pod<uint64_t>());
  }
  return m;
}

bool same_shape(const Params<float>& p, const NetworkShape& s) {
  if (static_cast<int>(p.size()) != s.layers()) return false;
  for (int l = 1; l <= s.layers(); ++l) {
    const auto& lp = p[static_cast<std::size_t>(l - 1)];
    if (lp.weight.rows() != s.widths[static_cast<std::size_t>(l)] ||
        lp.weight.cols() != s.widths[static_cast<std::size_t>(l - 1)] || lp.bias.size() != lp.weight.rows())
      return false;
  }
  return true;
}

}  // namespace

FrozenLedger Checkpoint::ledger() const {
  FrozenLedger ledger(actor_shape.widths);
  for (const auto& m : masks) ledger.commit(m);
  return ledger;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  Writer w;
  w.raw(kMagic, 4);
  w.pod<uint32_t>(kCheckpointVersion);
  w.pod<uint64_t>(c.config_hash);
  w.str(c.config_text);
  w.pod<int32_t>(c.tasks_done);
  w.pod<int64_t>(c.global_step);
  w.pod<double>(c.beta);
  for (uint64_t s : {c.run_seed, c.actor_seed, c.eval_seed, c.alloc_seed, c.embed_seed}) w.pod<uint64_t>(s);
  w.pod<double>(c.actor_shape.leaky_slope);
  w.pod<uint32_t>(static_cast<uint32_t>(c.actor_shape.widths.size()));
  for (int width : c.actor_shape.widths) w.pod<int32_t>(width);

  w.pod<uint32_t>(static_cast<uint32_t>(c.masks.size()));
  for (const auto& m : c.masks) write_masks(w, m);
  w.pod<uint32_t>(static_cast<uint32_t>(c.archive.size()));
  for (const auto& task : c.archive) {
    w.pod<uint32_t>(static_cast<uint32_t>(task.size()));
    for (const auto& layer : task) w.bits(layer);
  }
  w.params(c.actor_params);
  w.params(c.actor_init);

  w.pod<uint32_t>(static_cast<uint32_t>(c.curves.size()));
  for (const auto& curve : c.curves) {
    w.pod<int32_t>(curve.task_id);
    w.pod<uint64_t>(curve.samples.size());
    for (const auto& s : curve.samples) {
      w.pod<int64_t>(s.step);
      w.pod<double>(s.rate);
    }
  }
  w.pod<uint32_t>(kEndTag);

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw runtime_error("cannot write checkpoint " + tmp.string());
    os.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!os) throw runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw invalid_input("cannot open checkpoint " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());

  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic");
  Checkpoint c;
  c.version = r.pod<uint32_t>();
  if (c.version != kCheckpointVersion)
    throw format_error(path.string() + ": unsupported checkpoint version " + std::to_string(c.version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  c.config_hash = r.pod<uint64_t>();
  c.config_text = r.str();
  c.tasks_done = r.pod<int32_t>();
  c.global_step = r.pod<int64_t>();
  c.beta = r.pod<double>();
  c.run_seed = r.pod<uint64_t>();
  c.actor_seed = r.pod<uint64_t>();
  c.eval_seed = r.pod<uint64_t>();
  c.alloc_seed = r.pod<uint64_t>();
  c.embed_seed = r.pod<uint64_t>();
  c.actor_shape.leaky_slope = r.pod<double>();
  const auto nw = r.pod<uint32_t>();
  if (nw < 3 || nw > 64) r.fail("implausible network depth");
  for (uint32_t i = 0; i < nw; ++i) {
    const auto width = r.pod<int32_t>();
    if (width < 1) r.fail("non-positive layer width");
    c.actor_shape.widths.push_back(width);
  }

  const auto nm = r.pod<uint32_t>();
  for (uint32_t i = 0; i < nm; ++i) c.masks.push_back(read_masks(r));
  const auto na = r.pod<uint32_t>();
  for (uint32_t i = 0; i < na; ++i) {
    const auto nl = r.pod<uint32_t>();
    if (nl > 64) r.fail("implausible archive layer count");
    std::vector<BitMatrix> task;
    for (uint32_t l = 0; l < nl; ++l) task.push_back(r.bitmatrix());
    c.archive.push_back(std::move(task));
  }
  c.actor_params = r.params();
  c.actor_init = r.params();

  const auto nc = r.pod<uint32_t>();
  for (uint32_t i = 0; i < nc; ++i) {
    EvalCurve curve;
    curve.task_id = r.pod<int32_t>();
    const auto ns = r.pod<uint64_t>();
    for (uint64_t j = 0; j < ns; ++j) {
      const auto step = r.pod<int64_t>();
      const auto rate = r.pod<double>();
      curve.samples.push_back({step, rate});
    }
    c.curves.push_back(std::move(curve));
  }
  if (r.pod<uint32_t>() != kEndTag || !r.done()) r.fail("trailing or missing end marker");

  // Consistency: archive must equal the parameter masks of the stored neuron masks.
  if (c.tasks_done < 0 || static_cast<std::size_t>(c.tasks_done) != c.masks.size() || c.archive.size() != c.masks.size())
    r.fail("task cursor does not match archived masks");
  for (std::size_t k = 0; k < c.masks.size(); ++k) {
    if (c.masks[k].layers() != c.actor_shape.layers()) r.fail("mask depth does not match the network");
    for (int l = 0; l <= c.actor_shape.layers(); ++l)
      if (c.masks[k].phi[static_cast<std::size_t>(l)].size() != static_cast<std::size_t>(c.actor_shape.widths[static_cast<std::size_t>(l)]))
        r.fail("mask width does not match the network");
    if (param_masks(c.masks[k]) != c.archive[k]) r.fail("archived parameter masks disagree with neuron masks");
  }
  if (!same_shape(c.actor_params, c.actor_shape) || !same_shape(c.actor_init, c.actor_shape))
    r.fail("parameter shapes do not match the network");
  for (const auto& curve : c.curves) {
    try {
      curve.validate();
    } catch (const Error& e) {
      r.fail(e.what());
    }
  }
  return c;
}

}  // namespace ssde
