#pragma once

// Binary checkpoint container (little-endian):
//   "SPLC" | u32 version | u32 n_A n_B m_zA m_zB m_s
//   8 networks in order F_A F_B F_AtoB F_BtoA G_A G_B M_AtoB M_BtoA, each:
//     u32 layer count (0 = omitted) | u32 dims[layers+1] | u8 activation | f64 slope
//     per layer: f64 weight (out x in, row-major), f64 bias
//   f64 mean_A[n_A] std_A[n_A] mean_B[n_B] std_B[n_B]
//   optional "GEOD" | u32 tables, each: u8 group | u32 landmarks | u32 samples
//     | u32 landmark index[landmarks] | f64 distances (row-major)

#include "splice/geo_loss.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace splice {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SpliceModel model;
  std::vector<GeodesicTable> tables;
};

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(bits >> (8 * i)));
  }
  void count(std::size_t v) {
    if (v > 0xffffffffu) throw ConfigError("checkpoint: count does not fit in u32");
    u32(static_cast<std::uint32_t>(v));
  }
  std::vector<unsigned char>& bytes() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& b) : b_(b) {}
  std::uint64_t offset() const { return pos_; }
  bool at_end() const { return pos_ == b_.size(); }
  bool remaining(std::size_t n) const { return b_.size() - pos_ >= n; }

  void need(std::size_t n, const char* what) const {
    if (!remaining(n)) throw FormatError(std::string("checkpoint truncated reading ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return b_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string tag(const char* what) {
    need(4, what);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + 4));
    pos_ += 4;
    return s;
  }

 private:
  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

inline void write_net(ByteWriter& w, const Mlp& net) {
  w.count(net.layer_count());
  if (net.empty()) return;
  for (std::size_t d : net.dims()) w.count(d);
  w.u8(static_cast<std::uint8_t>(net.activation().kind));
  w.f64(net.activation().slope);
  for (const auto& l : net.layers()) {
    for (Index r = 0; r < l.weight.rows(); ++r)
      for (Index c = 0; c < l.weight.cols(); ++c) w.f64(l.weight(r, c));
    for (Index r = 0; r < l.bias.size(); ++r) w.f64(l.bias(r));
  }
}

inline Mlp read_net(ByteReader& r, const char* name, std::size_t in, std::size_t out) {
  const std::uint64_t start = r.offset();
  const std::uint32_t layers = r.u32("layer count");
  if (layers == 0) {
    if (in != 0 && out != 0) throw FormatError(std::string("network ") + name + " is missing", start);
    return Mlp{};
  }
  if (layers > 1024) throw FormatError(std::string("implausible layer count for ") + name, start);
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i <= layers; ++i) {
    const std::uint64_t at = r.offset();
    const std::uint32_t d = r.u32("layer dims");
    if (d == 0 || d > (1u << 24)) throw FormatError(std::string("invalid layer width in ") + name, at);
    dims.push_back(d);
  }
  if (dims.front() != in || dims.back() != out)
    throw FormatError(std::string("network ") + name + " shape does not match model dims", start);
  const std::uint64_t act_at = r.offset();
  const std::uint8_t tag = r.u8("activation tag");
  if (tag > 2) throw FormatError("unknown activation tag", act_at);
  ActivationSpec act{static_cast<Activation>(tag), r.f64("activation slope")};
  std::size_t params = 0;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) params += dims[i + 1] * (dims[i] + 1);
  r.need(params * 8, "network parameters");
  Mlp net(dims, act);
  for (auto& l : net.layers()) {
    for (Index rr = 0; rr < l.weight.rows(); ++rr)
      for (Index c = 0; c < l.weight.cols(); ++c) l.weight(rr, c) = r.f64("weights");
    for (Index rr = 0; rr < l.bias.size(); ++rr) l.bias(rr) = r.f64("biases");
  }
  return net;
}

inline RowVec read_vector(ByteReader& r, std::size_t n, const char* what) {
  r.need(n * 8, what);
  RowVec v(static_cast<Index>(n));
  for (Index i = 0; i < v.size(); ++i) v(i) = r.f64(what);
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const SpliceModel& m,
                                                       const std::vector<GeodesicTable>& tables = {}) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  if (m.standardizer.empty()) throw StateError("checkpoint: model has no standardisation statistics");
  detail::ByteWriter w;
  w.raw("SPLC", 4);
  w.u32(kCheckpointVersion);
  for (std::size_t d : {m.dims.n_A, m.dims.n_B, m.dims.m_zA, m.dims.m_zB, m.dims.m_s}) w.count(d);
  for (const Mlp* net : m.networks()) detail::write_net(w, *net);
  for (const RowVec* v : {&m.standardizer.mean_A, &m.standardizer.std_A, &m.standardizer.mean_B, &m.standardizer.std_B})
    for (Index i = 0; i < v->size(); ++i) w.f64((*v)(i));
  if (!tables.empty()) {
    w.raw("GEOD", 4);
    w.count(tables.size());
    for (const auto& t : tables) {
      w.u8(static_cast<std::uint8_t>(t.group));
      w.count(t.landmarks.size());
      w.count(static_cast<std::size_t>(t.distances.cols()));
      for (Index l : t.landmarks) w.count(static_cast<std::size_t>(l));
      for (Index r = 0; r < t.distances.rows(); ++r)
        for (Index c = 0; c < t.distances.cols(); ++c) w.f64(t.distances(r, c));
    }
  }
  return std::move(w.bytes());
}

inline Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes) {
  detail::ByteReader r(bytes);
  if (r.tag("magic") != "SPLC") throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  Checkpoint ck;
  SpliceDims& d = ck.model.dims;
  d.n_A = r.u32("dims");
  d.n_B = r.u32("dims");
  d.m_zA = r.u32("dims");
  d.m_zB = r.u32("dims");
  d.m_s = r.u32("dims");
  try {
    d.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid dims: ") + e.what(), 8);
  }
  SpliceModel& m = ck.model;
  m.F_A = detail::read_net(r, "F_A", d.n_A, d.m_zA);
  m.F_B = detail::read_net(r, "F_B", d.n_B, d.m_zB);
  m.F_AtoB = detail::read_net(r, "F_AtoB", d.n_A, d.m_s);
  m.F_BtoA = detail::read_net(r, "F_BtoA", d.n_B, d.m_s);
  m.G_A = detail::read_net(r, "G_A", d.m_s + d.m_zA, d.n_A);
  m.G_B = detail::read_net(r, "G_B", d.m_s + d.m_zB, d.n_B);
  m.M_AtoB = detail::read_net(r, "M_AtoB", d.m_zA, d.n_B);
  m.M_BtoA = detail::read_net(r, "M_BtoA", d.m_zB, d.n_A);
  m.standardizer.mean_A = detail::read_vector(r, d.n_A, "standardisation");
  m.standardizer.std_A = detail::read_vector(r, d.n_A, "standardisation");
  m.standardizer.mean_B = detail::read_vector(r, d.n_B, "standardisation");
  m.standardizer.std_B = detail::read_vector(r, d.n_B, "standardisation");
  if (r.at_end()) return ck;

  const std::uint64_t sec = r.offset();
  if (r.tag("section tag") != "GEOD") throw FormatError("unknown checkpoint section", sec);
  const std::uint32_t n_tables = r.u32("table count");
  for (std::uint32_t t = 0; t < n_tables; ++t) {
    GeodesicTable g;
    const std::uint64_t at = r.offset();
    const std::uint8_t group = r.u8("table group");
    if (group > 3) throw FormatError("unknown latent group in GEOD", at);
    g.group = static_cast<LatentGroup>(group);
    const std::uint32_t nl = r.u32("landmark count");
    const std::uint32_t ns = r.u32("sample count");
    r.need(static_cast<std::size_t>(nl) * 4, "landmarks");
    for (std::uint32_t i = 0; i < nl; ++i) {
      const std::uint64_t li = r.offset();
      const std::uint32_t v = r.u32("landmarks");
      if (v >= ns) throw FormatError("landmark index out of range", li);
      g.landmarks.push_back(static_cast<Index>(v));
    }
    r.need(static_cast<std::size_t>(nl) * ns * 8, "geodesic distances");
    g.distances.resize(nl, ns);
    for (Index i = 0; i < g.distances.rows(); ++i)
      for (Index j = 0; j < g.distances.cols(); ++j) g.distances(i, j) = r.f64("geodesic distances");
    ck.tables.push_back(std::move(g));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint", r.offset());
  return ck;
}

inline void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

inline void save_checkpoint(const SpliceModel& m, const std::string& path,
                            const std::vector<GeodesicTable>& tables = {}) {
  write_bytes(path, serialize_checkpoint(m, tables));
}

inline Checkpoint load_checkpoint_with_tables(const std::string& path) {
  return parse_checkpoint(detail::read_file_bytes(path));
}

inline SpliceModel load_checkpoint(const std::string& path) { return load_checkpoint_with_tables(path).model; }

}  // namespace splice
