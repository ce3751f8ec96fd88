#include "splice/checkpoint.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace splice;

namespace {

SpliceModel sample_model(SpliceDims d, std::uint64_t seed = 5) {
  NetworkLayout layout;
  layout.encoder_hidden = {7, 5};
  SpliceModel m = make_model(d, layout, seed);
  Rng rng(seed + 1);
  m.standardizer.mean_A = randn(1, static_cast<Index>(d.n_A), rng);
  m.standardizer.std_A = (randn(1, static_cast<Index>(d.n_A), rng).array().abs() + 0.5).matrix();
  m.standardizer.mean_B = randn(1, static_cast<Index>(d.n_B), rng);
  m.standardizer.std_B = (randn(1, static_cast<Index>(d.n_B), rng).array().abs() + 0.5).matrix();
  return m;
}

void expect_same_nets(const SpliceModel& a, const SpliceModel& b) {
  const auto na = a.networks(), nb = b.networks();
  for (std::size_t k = 0; k < na.size(); ++k) {
    ASSERT_EQ(na[k]->layer_count(), nb[k]->layer_count()) << k;
    EXPECT_EQ(na[k]->dims(), nb[k]->dims());
    for (std::size_t l = 0; l < na[k]->layer_count(); ++l) {
      EXPECT_TRUE((na[k]->layers()[l].weight.array() == nb[k]->layers()[l].weight.array()).all());
      EXPECT_TRUE((na[k]->layers()[l].bias.array() == nb[k]->layers()[l].bias.array()).all());
    }
  }
}

std::uint32_t le32(const std::vector<unsigned char>& b, std::size_t off) {
  return std::uint32_t(b[off]) | (std::uint32_t(b[off + 1]) << 8) | (std::uint32_t(b[off + 2]) << 16) |
         (std::uint32_t(b[off + 3]) << 24);
}

}  // namespace

TEST(Checkpoint, HeaderLayout) {
  const SpliceModel m = sample_model({6, 4, 2, 3, 1});
  const auto b = serialize_checkpoint(m);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "SPLC");
  EXPECT_EQ(le32(b, 4), 1u);
  EXPECT_EQ(le32(b, 8), 6u);
  EXPECT_EQ(le32(b, 12), 4u);
  EXPECT_EQ(le32(b, 16), 2u);
  EXPECT_EQ(le32(b, 20), 3u);
  EXPECT_EQ(le32(b, 24), 1u);
  // F_A: 3 layers, dims 6 7 5 2.
  EXPECT_EQ(le32(b, 28), 3u);
  EXPECT_EQ(le32(b, 32), 6u);
  EXPECT_EQ(le32(b, 44), 2u);
}

TEST(Checkpoint, ByteCountMatchesParameterCount) {
  const SpliceModel m = sample_model({6, 4, 2, 3, 1});
  std::size_t expect = 4 + 4 + 5 * 4;
  for (const Mlp* n : m.networks()) {
    expect += 4;
    if (n->empty()) continue;
    expect += 4 * n->dims().size() + 1 + 8;
    for (std::size_t i = 0; i + 1 < n->dims().size(); ++i) expect += 8 * n->dims()[i + 1] * (n->dims()[i] + 1);
  }
  expect += 8 * 2 * (6 + 4);
  EXPECT_EQ(serialize_checkpoint(m).size(), expect);
}

TEST(Checkpoint, RoundTripReproducesOutputsBitExactly) {
  const SpliceModel m = sample_model({6, 4, 2, 3, 2});
  const std::string path = (std::filesystem::temp_directory_path() / "splice_ck.bin").string();
  save_checkpoint(m, path);
  const SpliceModel r = load_checkpoint(path);
  EXPECT_EQ(r.dims, m.dims);
  expect_same_nets(m, r);
  EXPECT_TRUE((r.standardizer.std_B.array() == m.standardizer.std_B.array()).all());
  Rng rng(9);
  const Mat xa = randn(11, 6, rng), xb = randn(11, 4, rng);
  const LatentBundle b1 = encode(m, xa, xb), b2 = encode(r, xa, xb);
  EXPECT_TRUE((b1.s_AtoB.array() == b2.s_AtoB.array()).all());
  EXPECT_TRUE((b1.z_B.array() == b2.z_B.array()).all());
  const auto [ya, yb] = decode(m, b1);
  const auto [ra, rb] = decode(r, b2);
  EXPECT_TRUE((ya.array() == ra.array()).all());
  EXPECT_TRUE((yb.array() == rb.array()).all());
}

TEST(Checkpoint, EmptyPrivateLatentOmitsNetworks) {
  const SpliceModel m = sample_model({6, 4, 0, 3, 2});
  const Checkpoint ck = parse_checkpoint(serialize_checkpoint(m));
  EXPECT_TRUE(ck.model.F_A.empty());
  EXPECT_TRUE(ck.model.M_AtoB.empty());
  EXPECT_FALSE(ck.model.F_B.empty());
  expect_same_nets(m, ck.model);
  EXPECT_EQ(le32(serialize_checkpoint(m), 28), 0u);
}

TEST(Checkpoint, GeodesicSectionRoundTrip) {
  const SpliceModel m = sample_model({3, 3, 1, 1, 1});
  GeodesicTable t;
  t.group = LatentGroup::SBtoA;
  t.landmarks = {0, 4};
  Rng rng(2);
  t.distances = randn(2, 6, rng).cwiseAbs();
  const Checkpoint ck = parse_checkpoint(serialize_checkpoint(m, {t}));
  ASSERT_EQ(ck.tables.size(), 1u);
  EXPECT_EQ(ck.tables[0].group, LatentGroup::SBtoA);
  EXPECT_EQ(ck.tables[0].landmarks, t.landmarks);
  EXPECT_TRUE((ck.tables[0].distances.array() == t.distances.array()).all());
}

TEST(Checkpoint, EveryTruncationIsFormatError) {
  const SpliceModel m = sample_model({3, 2, 1, 1, 1});
  GeodesicTable t;
  t.landmarks = {1};
  t.distances = Mat::Ones(1, 3);
  const auto bytes = serialize_checkpoint(m, {t});
  for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
    if (cut == bytes.size() - (4 + 4 + 1 + 4 + 4 + 4 + 24)) continue;  // clean end before the GEOD section
    std::vector<unsigned char> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(parse_checkpoint(part), FormatError) << cut;
  }
}

TEST(Checkpoint, CorruptFieldsReportOffsets) {
  const SpliceModel m = sample_model({3, 2, 1, 1, 1});
  auto bytes = serialize_checkpoint(m);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  try {
    parse_checkpoint(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(parse_checkpoint(bad), FormatError);
  bad = bytes;
  bad[32] = 9;  // F_A input width no longer matches n_A
  try {
    parse_checkpoint(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 28u);
  }
}

TEST(Checkpoint, RequiresStandardisation) {
  NetworkLayout layout;
  layout.encoder_hidden = {4};
  SpliceModel m = make_model({3, 3, 1, 1, 1}, layout, 1);
  m.standardizer = Standardizer{};
  EXPECT_THROW(serialize_checkpoint(m), StateError);
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/ck.bin"), IoError);
}
