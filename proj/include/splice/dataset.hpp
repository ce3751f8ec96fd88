#pragma once

// Paired views with optional ground truth, split bookkeeping, and CSV I/O.

#include "splice/core.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace splice {

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "'");
}

/// Ground-truth generative variables. Any member may be empty (0 columns or
/// no entries) when the source does not provide it.
struct Truth {
  Mat s;    // shared latent
  Mat z_A;  // private to A
  Mat z_B;  // private to B
  std::vector<double> theta_deg;
  std::vector<int> label;
};

struct PairedDataset {
  Mat x_A;
  Mat x_B;
  std::optional<Truth> truth;
  std::vector<Split> split;

  Index size() const { return x_A.rows(); }

  void validate() const {
    if (x_A.rows() != x_B.rows()) throw ConfigError("dataset: views have different row counts");
    if (static_cast<Index>(split.size()) != x_A.rows()) throw ConfigError("dataset: split not aligned");
    if (truth) {
      auto ok = [&](Index r) { return r == 0 || r == x_A.rows(); };
      if (!ok(truth->s.rows()) || !ok(truth->z_A.rows()) || !ok(truth->z_B.rows()) ||
          !ok(static_cast<Index>(truth->theta_deg.size())) || !ok(static_cast<Index>(truth->label.size())))
        throw ConfigError("dataset: truth not aligned with samples");
    }
  }

  std::vector<Index> indices(Split s) const {
    std::vector<Index> idx;
    for (Index i = 0; i < static_cast<Index>(split.size()); ++i)
      if (split[static_cast<std::size_t>(i)] == s) idx.push_back(i);
    return idx;
  }

  bool has_labels() const { return truth && !truth->label.empty(); }
  bool has_theta() const { return truth && !truth->theta_deg.empty(); }
};

/// Seeded permutation; the first n_train go to train, the next n_val to val,
/// the rest to test.
inline std::vector<Split> make_split(Index n, Index n_train, Index n_val, std::uint64_t seed) {
  if (n_train + n_val > n) throw ConfigError("split counts exceed sample count");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Split> out(static_cast<std::size_t>(n), Split::Test);
  for (Index k = 0; k < n; ++k) {
    Split s = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
    out[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])] = s;
  }
  return out;
}

/// Split by fractions, rounding the train/val counts to nearest.
inline std::vector<Split> make_split_fractions(Index n, double train_frac, double val_frac, std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0 + 1e-12)
    throw ConfigError("split fractions must be non-negative and sum to at most 1");
  const auto n_train = static_cast<Index>(std::llround(train_frac * static_cast<double>(n)));
  const auto n_val = std::min<Index>(n - n_train, static_cast<Index>(std::llround(val_frac * static_cast<double>(n))));
  return make_split(n, n_train, n_val, seed);
}

inline PairedDataset subset(const PairedDataset& d, const std::vector<Index>& rows) {
  PairedDataset out;
  out.x_A = take_rows(d.x_A, rows);
  out.x_B = take_rows(d.x_B, rows);
  for (Index r : rows) out.split.push_back(d.split[static_cast<std::size_t>(r)]);
  if (d.truth) {
    Truth t;
    auto pick = [&](const Mat& m) { return m.rows() == 0 ? Mat(0, m.cols()) : take_rows(m, rows); };
    t.s = pick(d.truth->s);
    t.z_A = pick(d.truth->z_A);
    t.z_B = pick(d.truth->z_B);
    for (Index r : rows) {
      if (!d.truth->theta_deg.empty()) t.theta_deg.push_back(d.truth->theta_deg[static_cast<std::size_t>(r)]);
      if (!d.truth->label.empty()) t.label.push_back(d.truth->label[static_cast<std::size_t>(r)]);
    }
    out.truth = std::move(t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV: '.' decimal, '\n' line endings, header row.

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  CsvTable t;
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw FormatError(path + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(t.header.size()),
                        lineno);
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw FormatError(path + ": missing header row", 0);
  return t;
}

inline double parse_double(const std::string& s, const std::string& path, std::uint64_t row) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(path + ": not a number '" + s + "'", row);
  }
}

/// Numeric columns of a CSV, skipping the named bookkeeping columns.
inline Mat csv_matrix(const CsvTable& t, const std::string& path, const std::vector<std::string>& skip = {"config_hash"}) {
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (std::find(skip.begin(), skip.end(), t.header[c]) == skip.end()) cols.push_back(c);
  Mat m(static_cast<Index>(t.rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t k = 0; k < cols.size(); ++k)
      m(static_cast<Index>(r), static_cast<Index>(k)) = parse_double(t.rows[r][cols[k]], path, r + 2);
  return m;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path), path_(path) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) throw IoError("write failed on '" + path_ + "'");
  }

 private:
  std::ofstream out_;
  std::string path_;
};

inline std::vector<std::string> numbered(const std::string& prefix, Index n) {
  std::vector<std::string> h;
  for (Index i = 0; i < n; ++i) h.push_back(prefix + std::to_string(i));
  return h;
}

inline void write_matrix_csv(const std::string& path, const Mat& m, const std::string& prefix,
                             const std::string& config_hash) {
  auto header = numbered(prefix, m.cols());
  header.emplace_back("config_hash");
  CsvWriter w(path, header);
  std::vector<std::string> cells(static_cast<std::size_t>(m.cols()) + 1);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) cells[static_cast<std::size_t>(c)] = format_double(m(r, c));
    cells.back() = config_hash;
    w.row(cells);
  }
}

/// viewA.csv, viewB.csv and truth.csv (split plus any ground truth) in `dir`.
inline void write_dataset_dir(const PairedDataset& d, const std::string& dir, const std::string& config_hash) {
  d.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  write_matrix_csv(dir + "/viewA.csv", d.x_A, "a", config_hash);
  write_matrix_csv(dir + "/viewB.csv", d.x_B, "b", config_hash);
  std::vector<std::string> header{"sample", "split"};
  const Truth empty;
  const Truth& t = d.truth ? *d.truth : empty;
  auto add = [&](const std::string& p, const Mat& m) {
    if (m.rows() > 0)
      for (auto& h : numbered(p, m.cols())) header.push_back(h);
  };
  add("s", t.s);
  add("zA", t.z_A);
  add("zB", t.z_B);
  if (!t.theta_deg.empty()) header.emplace_back("theta_deg");
  if (!t.label.empty()) header.emplace_back("label");
  header.emplace_back("config_hash");
  CsvWriter w(dir + "/truth.csv", header);
  for (Index i = 0; i < d.size(); ++i) {
    std::vector<std::string> row{std::to_string(i), split_name(d.split[static_cast<std::size_t>(i)])};
    auto put = [&](const Mat& m) {
      if (m.rows() > 0)
        for (Index c = 0; c < m.cols(); ++c) row.push_back(format_double(m(i, c)));
    };
    put(t.s);
    put(t.z_A);
    put(t.z_B);
    if (!t.theta_deg.empty()) row.push_back(format_double(t.theta_deg[static_cast<std::size_t>(i)]));
    if (!t.label.empty()) row.push_back(std::to_string(t.label[static_cast<std::size_t>(i)]));
    row.push_back(config_hash);
    w.row(row);
  }
}

inline Mat truth_block(const CsvTable& t, const std::string& prefix, const std::string& path) {
  std::vector<std::size_t> cols;
  for (Index k = 0;; ++k) {
    auto c = t.column(prefix + std::to_string(k));
    if (!c) break;
    cols.push_back(*c);
  }
  if (cols.empty()) return Mat(0, 0);
  Mat m(static_cast<Index>(t.rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t k = 0; k < cols.size(); ++k)
      m(static_cast<Index>(r), static_cast<Index>(k)) = parse_double(t.rows[r][cols[k]], path, r + 2);
  return m;
}

/// Reads a directory written by `write_dataset_dir`. truth.csv is optional;
/// without it every sample is assigned to the training split.
inline PairedDataset read_dataset_dir(const std::string& dir) {
  PairedDataset d;
  const std::string pa = dir + "/viewA.csv", pb = dir + "/viewB.csv", pt = dir + "/truth.csv";
  d.x_A = csv_matrix(read_csv(pa), pa);
  d.x_B = csv_matrix(read_csv(pb), pb);
  if (d.x_A.rows() != d.x_B.rows())
    throw FormatError("viewA.csv and viewB.csv have different row counts", static_cast<std::uint64_t>(d.x_B.rows()));
  std::ifstream probe(pt);
  if (!probe) {
    d.split.assign(static_cast<std::size_t>(d.x_A.rows()), Split::Train);
    return d;
  }
  const CsvTable t = read_csv(pt);
  if (static_cast<Index>(t.rows.size()) != d.x_A.rows())
    throw FormatError("truth.csv row count differs from views", t.rows.size());
  auto split_col = t.column("split");
  if (!split_col) throw FormatError("truth.csv: missing 'split' column", 0);
  for (const auto& r : t.rows) d.split.push_back(split_from_name(r[*split_col]));
  Truth tr;
  tr.s = truth_block(t, "s", pt);
  tr.z_A = truth_block(t, "zA", pt);
  tr.z_B = truth_block(t, "zB", pt);
  if (auto c = t.column("theta_deg"))
    for (std::size_t r = 0; r < t.rows.size(); ++r) tr.theta_deg.push_back(parse_double(t.rows[r][*c], pt, r + 2));
  if (auto c = t.column("label"))
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      tr.label.push_back(static_cast<int>(parse_double(t.rows[r][*c], pt, r + 2)));
  d.truth = std::move(tr);
  d.validate();
  return d;
}

}  // namespace splice
