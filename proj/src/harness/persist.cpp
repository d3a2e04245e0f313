#include "cone/harness/persist.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cone/error.hpp"

namespace cone::harness {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace {

constexpr char kDatasetMagic[8] = {'C', 'O', 'N', 'E', 'D', 'S', 'E', 'T'};
constexpr char kCheckpointMagic[8] = {'C', 'O', 'N', 'E', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8 + 8;

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void u64(std::uint64_t v) { pod(v); }
  void f64(double v) { pod(v); }
  void str(const std::string& s) {
    u64(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void doubles(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void ints(const std::vector<int>& v) {
    u64(v.size());
    for (int x : v) pod<std::int32_t>(x);
  }
  void tensor(const Tensor& t) {
    u64(t.rows());
    u64(t.cols());
    for (double x : t.values()) f64(x);
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}

  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_, sizeof(T));
    p_ += sizeof(T);
    return v;
  }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  double f64() { return pod<double>(); }
  std::uint64_t count(std::size_t elem_size) {
    const auto n = u64();
    if (elem_size > 0 && n > static_cast<std::uint64_t>(end_ - p_) / elem_size)
      throw FormatError("format", "length field exceeds payload");
    return n;
  }
  std::string str() {
    const auto n = count(1);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  std::vector<double> doubles() {
    std::vector<double> v(count(8));
    for (auto& x : v) x = f64();
    return v;
  }
  std::vector<int> ints() {
    std::vector<int> v(count(4));
    for (auto& x : v) x = pod<std::int32_t>();
    return v;
  }
  Tensor tensor() {
    const auto r = u64();
    const auto c = u64();
    if (c != 0 && r > static_cast<std::uint64_t>(end_ - p_) / 8 / c)
      throw FormatError("format", "tensor exceeds payload");
    Tensor t(r, c);
    for (auto& x : t.values()) x = f64();
    return t;
  }
  void finish() const {
    if (p_ != end_) throw FormatError("format", "trailing bytes after payload");
  }

 private:
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw FormatError("format", "unexpected end of payload");
  }
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

std::vector<std::uint8_t> wrap(const char (&magic)[8], std::uint32_t version,
                               const std::vector<std::uint8_t>& payload) {
  Writer w;
  for (char c : magic) w.pod(c);
  w.pod(version);
  w.u64(payload.size());
  w.u64(fnv1a64(payload.data(), payload.size()));
  auto out = w.take();
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

// Checks magic, version and checksum; returns a reader over the payload.
Reader unwrap(const char (&magic)[8], std::uint32_t version, const std::vector<std::uint8_t>& bytes,
              const char* what) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 8) != 0)
    throw FormatError("format", std::string("not a ") + what + " file");
  if (bytes.size() < kHeaderSize) throw FormatError("checksum", std::string(what) + " header is truncated");
  Reader head(bytes.data() + 8, kHeaderSize - 8);
  const auto ver = head.pod<std::uint32_t>();
  const auto size = head.u64();
  const auto sum = head.u64();
  if (ver != version)
    throw FormatError("version", std::string(what) + " version " + std::to_string(ver) +
                                     " is not supported (expected " + std::to_string(version) + ")");
  const std::size_t have = bytes.size() - kHeaderSize;
  if (have != size || fnv1a64(bytes.data() + kHeaderSize, have) != sum)
    throw FormatError("checksum", std::string(what) + " payload is truncated or corrupted");
  return Reader(bytes.data() + kHeaderSize, have);
}

void write_gen(Writer& w, const datagen::GenConfig& g) {
  w.u64(g.n);
  w.u64(g.n_topics);
  w.u64(g.vocab);
  w.u64(g.words_per_doc);
  w.f64(g.avg_degree);
  w.f64(g.kappa1);
  w.f64(g.kappa2);
  w.f64(g.noise_std);
  w.f64(g.topic_concentration);
  w.f64(g.word_concentration);
  w.u64(g.seed);
}

datagen::GenConfig read_gen(Reader& r) {
  datagen::GenConfig g;
  g.n = r.u64();
  g.n_topics = r.u64();
  g.vocab = r.u64();
  g.words_per_doc = r.u64();
  g.avg_degree = r.f64();
  g.kappa1 = r.f64();
  g.kappa2 = r.f64();
  g.noise_std = r.f64();
  g.topic_concentration = r.f64();
  g.word_concentration = r.f64();
  g.seed = r.u64();
  return g;
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_dataset(const datagen::NetworkedDataset& ds) {
  Writer w;
  write_gen(w, ds.config);
  w.tensor(ds.features);
  w.u64(ds.graph.num_nodes());
  w.u64(ds.graph.num_edges());
  for (const auto& [a, b] : ds.graph.edges()) {
    w.u64(a);
    w.u64(b);
  }
  w.ints(ds.t);
  w.doubles(ds.y);
  const auto& g = ds.truth;
  w.doubles(g.y0);
  w.doubles(g.y1);
  w.doubles(g.weights.raw);
  w.doubles(g.weights.normalized);
  w.tensor(g.topics);
  w.doubles(g.centroids.treated);
  w.doubles(g.centroids.control);
  w.u64(g.centroids.treated_source);
  w.tensor(g.scores);
  w.doubles(g.treat_prob);
  return wrap(kDatasetMagic, kDatasetVersion, w.take());
}

datagen::NetworkedDataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  Reader r = unwrap(kDatasetMagic, kDatasetVersion, bytes, "dataset");
  datagen::NetworkedDataset ds;
  ds.config = read_gen(r);
  ds.features = r.tensor();
  const auto n = r.u64();
  const auto m = r.count(16);
  std::vector<graph::Edge> edges(m);
  for (auto& e : edges) {
    e.first = r.u64();
    e.second = r.u64();
  }
  ds.graph = graph::build_graph(n, edges);
  ds.t = r.ints();
  ds.y = r.doubles();
  auto& g = ds.truth;
  g.y0 = r.doubles();
  g.y1 = r.doubles();
  g.weights.raw = r.doubles();
  g.weights.normalized = r.doubles();
  g.topics = r.tensor();
  g.centroids.treated = r.doubles();
  g.centroids.control = r.doubles();
  g.centroids.treated_source = r.u64();
  g.scores = r.tensor();
  g.treat_prob = r.doubles();
  r.finish();

  const auto size = ds.features.rows();
  if (n != size || ds.t.size() != size || ds.y.size() != size || g.y0.size() != size || g.y1.size() != size)
    throw FormatError("format", "dataset arrays disagree on instance count");
  if (g.weights.raw.size() != ds.graph.adjacency().num_entries())
    throw FormatError("format", "hidden weights do not match the graph");
  return ds;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  const auto& c = ck.config;
  w.u64(c.dim);
  w.u64(c.heads);
  w.u64(c.layers);
  w.f64(c.gamma);
  w.f64(c.zeta);
  w.f64(c.lr);
  w.pod<std::int32_t>(c.epochs);
  w.pod<std::int32_t>(c.patience);
  w.u64(c.critic_hidden);
  w.u64(c.outcome_hidden);
  w.f64(c.leaky_slope);
  w.u64(c.seed);
  w.u64(ck.feature_dim);
  w.u64(ck.params.size());
  for (const auto& [name, t] : ck.params) {
    w.str(name);
    w.tensor(t);
  }
  return wrap(kCheckpointMagic, kCheckpointVersion, w.take());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r = unwrap(kCheckpointMagic, kCheckpointVersion, bytes, "checkpoint");
  Checkpoint ck;
  auto& c = ck.config;
  c.dim = r.u64();
  c.heads = r.u64();
  c.layers = r.u64();
  c.gamma = r.f64();
  c.zeta = r.f64();
  c.lr = r.f64();
  c.epochs = r.pod<std::int32_t>();
  c.patience = r.pod<std::int32_t>();
  c.critic_hidden = r.u64();
  c.outcome_hidden = r.u64();
  c.leaky_slope = r.f64();
  c.seed = r.u64();
  ck.feature_dim = r.u64();
  const auto count = r.count(24);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = r.str();
    ck.params.emplace(std::move(name), r.tensor());
  }
  r.finish();
  return ck;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("io", "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("io", "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("io", "write to '" + path + "' failed");
}

void save_dataset(const std::string& path, const datagen::NetworkedDataset& ds) {
  write_file(path, encode_dataset(ds));
}

datagen::NetworkedDataset load_dataset(const std::string& path) { return decode_dataset(read_file(path)); }

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace cone::harness
