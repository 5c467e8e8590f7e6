#include "cpfl/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <ostream>

namespace cpfl {

static_assert(std::endian::native == std::endian::little,
              "the container codec assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'P', 'F', 'L'};
constexpr std::size_t kBaselineDescriptorBytes = 128;

class Writer {
 public:
  template <class T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void put_f32_matrix(const DescriptorMatrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put(static_cast<float>(m(r, c)));
    }
  }

  // Reserves a length slot and returns its offset.
  std::size_t begin_section() {
    const std::size_t at = buf_.size();
    put<std::uint64_t>(0);
    return at;
  }
  void end_section(std::size_t at) {
    const std::uint64_t len = buf_.size() - at - sizeof(std::uint64_t);
    std::memcpy(buf_.data() + at, &len, sizeof len);
  }

  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  const std::uint8_t* get_bytes(std::size_t n) {
    need(n);
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  DescriptorMatrix get_f32_matrix(std::size_t rows, std::size_t cols) {
    need(rows * cols * sizeof(float));
    DescriptorMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<float>();
    }
    return m;
  }

  Reader section(const char* name) {
    const auto len = get<std::uint64_t>();
    if (len > size_ - pos_) {
      throw FormatError(std::string(name) + " section length exceeds the file");
    }
    Reader sub(data_ + pos_, static_cast<std::size_t>(len));
    sub.name_ = name;
    pos_ += static_cast<std::size_t>(len);
    return sub;
  }

  void expect_end() const {
    if (pos_ != size_) throw FormatError(name_ + " section has trailing bytes");
  }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (n > size_ - pos_) throw FormatError(name_ + " is truncated");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string name_ = "container";
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const CompressedModel& model) {
  Writer w;
  w.put_bytes(reinterpret_cast<const std::uint8_t*>(kMagic), 4);
  w.put<std::uint32_t>(kContainerVersion);

  const std::size_t k = model.vocab.size();
  const std::size_t dim = model.vocab.dim();
  const std::size_t bits = static_cast<std::size_t>(model.embedding.bits);

  std::size_t s = w.begin_section();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(k));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dim));
  w.put_f32_matrix(model.vocab.centroids);
  w.end_section(s);

  s = w.begin_section();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(bits));
  w.put<std::uint64_t>(model.embedding.seed);
  w.put_f32_matrix(model.embedding.projection);
  w.put_f32_matrix(model.embedding.thresholds);
  w.end_section(s);

  s = w.begin_section();
  w.put<std::uint64_t>(model.points.size());
  for (const Point3D& p : model.points) {
    w.put<std::uint32_t>(p.id);
    w.put<double>(p.position.x());
    w.put<double>(p.position.y());
    w.put<double>(p.position.z());
  }
  w.end_section(s);

  s = w.begin_section();
  w.put<std::uint64_t>(model.entries.size());
  std::vector<std::uint8_t> sig(bits / 8);
  for (const ModelEntry& e : model.entries) {
    w.put<std::uint32_t>(e.point_id);
    w.put<std::uint32_t>(e.word_id);
    e.signature.to_bytes(sig);
    w.put_bytes(sig.data(), sig.size());
  }
  w.end_section(s);

  s = w.begin_section();
  const auto edges = model.graph.edges();
  w.put<std::uint64_t>(edges.size());
  for (const auto& [p, d] : edges) {
    w.put<std::uint32_t>(p);
    w.put<std::uint32_t>(d);
  }
  w.end_section(s);
  return w.take();
}

CompressedModel deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  const std::uint8_t* magic = r.get_bytes(4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a CPFL container");
  const auto version = r.get<std::uint32_t>();
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version));
  }

  CompressedModel model;
  Reader vs = r.section("vocabulary");
  const auto k = vs.get<std::uint32_t>();
  const auto dim = vs.get<std::uint32_t>();
  model.vocab.centroids = vs.get_f32_matrix(k, dim);
  vs.expect_end();

  Reader es = r.section("embedding");
  const auto bits = es.get<std::uint32_t>();
  if (bits % 8 != 0 || bits > static_cast<std::uint32_t>(Signature::kMaxBits)) {
    throw FormatError("invalid signature length " + std::to_string(bits));
  }
  model.embedding.bits = static_cast<int>(bits);
  model.embedding.seed = es.get<std::uint64_t>();
  model.embedding.projection = es.get_f32_matrix(bits, dim);
  model.embedding.thresholds = es.get_f32_matrix(k, bits);
  es.expect_end();

  Reader ps = r.section("points");
  const auto num_points = ps.get<std::uint64_t>();
  if (num_points > ps.remaining() / 28) throw FormatError("points section is truncated");
  model.points.resize(static_cast<std::size_t>(num_points));
  for (std::size_t i = 0; i < model.points.size(); ++i) {
    Point3D& p = model.points[i];
    p.id = ps.get<std::uint32_t>();
    if (p.id != i) throw FormatError("point ids must be dense and ordered");
    const double x = ps.get<double>();
    const double y = ps.get<double>();
    const double z = ps.get<double>();
    p.position = Vec3(x, y, z);
  }
  ps.expect_end();

  Reader ns = r.section("entries");
  const auto num_entries = ns.get<std::uint64_t>();
  const std::size_t entry_size = 8 + bits / 8;
  if (num_entries > ns.remaining() / entry_size) throw FormatError("entries section is truncated");
  model.entries.resize(static_cast<std::size_t>(num_entries));
  for (ModelEntry& e : model.entries) {
    e.point_id = ns.get<std::uint32_t>();
    e.word_id = ns.get<std::uint32_t>();
    if (e.point_id >= num_points || e.word_id >= k) {
      throw FormatError("entry references an unknown point or word");
    }
    e.signature = Signature::from_bytes({ns.get_bytes(bits / 8), bits / 8}, static_cast<int>(bits));
  }
  ns.expect_end();
  const bool sorted = std::is_sorted(
      model.entries.begin(), model.entries.end(), [](const ModelEntry& a, const ModelEntry& b) {
        return std::pair(a.point_id, a.word_id) < std::pair(b.point_id, b.word_id);
      });
  if (!sorted) throw FormatError("entries must be sorted by (point, word)");

  Reader gs = r.section("visibility");
  const auto num_edges = gs.get<std::uint64_t>();
  if (num_edges > gs.remaining() / 8) throw FormatError("visibility section is truncated");
  std::vector<std::pair<PointId, ImageId>> edges(static_cast<std::size_t>(num_edges));
  std::size_t num_images = 0;
  for (auto& [p, d] : edges) {
    p = gs.get<std::uint32_t>();
    d = gs.get<std::uint32_t>();
    num_images = std::max<std::size_t>(num_images, static_cast<std::size_t>(d) + 1);
  }
  gs.expect_end();
  r.expect_end();
  try {
    model.graph = VisibilityGraph::from_edges(model.points.size(), num_images, std::move(edges));
  } catch (const ValidationError& e) {
    throw FormatError(std::string("visibility section: ") + e.what());
  }
  model.build_index();
  return model;
}

void save_model(const CompressedModel& model, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

CompressedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

MemoryReport memory_report(const CompressedModel& model) {
  MemoryReport m;
  m.bits = static_cast<std::size_t>(model.embedding.bits);
  m.num_entries = model.entries.size();
  m.signature_bytes_per_entry = m.bits / 8;
  m.signature_payload = m.num_entries * m.signature_bytes_per_entry;
  m.entry_table = m.num_entries * (4 + 4 + m.signature_bytes_per_entry);
  m.baseline_entry_table = m.num_entries * (4 + 4 + kBaselineDescriptorBytes);
  m.points_section = model.points.size() * (4 + 3 * 8);
  m.visibility_section = model.graph.num_edges() * (4 + 4);
  m.vocabulary_section = model.vocab.size() * model.vocab.dim() * 4;
  m.embedding_section =
      (static_cast<std::size_t>(model.embedding.projection.size()) +
       static_cast<std::size_t>(model.embedding.thresholds.size())) *
      4;
  m.entry_reduction = m.entry_table > 0 ? static_cast<double>(m.baseline_entry_table) /
                                              static_cast<double>(m.entry_table)
                                        : 0.0;
  return m;
}

void print_memory_report(std::ostream& os, const MemoryReport& m) {
  auto row = [&](const char* label, std::size_t v) {
    os << std::left << std::setw(34) << label << std::right << std::setw(16) << v << '\n';
  };
  row("signature bits", m.bits);
  row("entries", m.num_entries);
  row("signature bytes per entry", m.signature_bytes_per_entry);
  row("signature payload", m.signature_payload);
  row("entry table", m.entry_table);
  row("integer-mean entry table", m.baseline_entry_table);
  row("points", m.points_section);
  row("visibility", m.visibility_section);
  row("vocabulary", m.vocabulary_section);
  row("embedding", m.embedding_section);
  row("total", m.total());
  os << std::left << std::setw(34) << "entry table reduction" << std::right << std::setw(15)
     << std::fixed << std::setprecision(3) << m.entry_reduction << "x\n";
}

}  // namespace cpfl
