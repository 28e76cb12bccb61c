#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gina/dataio.hpp"

using namespace gina;

namespace {

MaskedMatrix parse(const std::string& text) {
    std::istringstream in(text);
    return parse_csv(in);
}

std::string emit(const MaskedMatrix& m) {
    std::ostringstream out;
    write_csv(out, m);
    return out.str();
}

MaskedMatrix random_masked(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    Rng rng(seed);
    MaskedMatrix m = MaskedMatrix::complete(standard_normal(n, d, rng));
    std::bernoulli_distribution miss(0.3);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            if (miss(rng)) {
                m.mask(i, j) = 0.0;
                m.values(i, j) = 0.0;
            }
    return m;
}

}  // namespace

TEST(Csv, EmptyCellIsMissingAuxSeparated) {
    const MaskedMatrix m = parse("a,b,aux_u\n1,,0.5\n");
    ASSERT_EQ(m.rows(), 1);
    ASSERT_EQ(m.cols(), 2);
    EXPECT_EQ(m.values(0, 0), 1.0);
    EXPECT_EQ(m.mask(0, 0), 1.0);
    EXPECT_EQ(m.mask(0, 1), 0.0);
    ASSERT_EQ(m.aux_cols(), 1);
    EXPECT_EQ(m.aux(0, 0), 0.5);
    EXPECT_EQ(m.names, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(m.aux_names, std::vector<std::string>{"aux_u"});
}

TEST(Csv, RoundTripIsByteIdentical) {
    const std::string text = "x1,x2,x3,aux_x1\n0.1,,-3.25,0.1\n,1e-300,2,7\n5,6,,-1e-04\n";
    const MaskedMatrix m = parse(text);
    EXPECT_EQ(emit(m), text);
    EXPECT_EQ(emit(parse(emit(m))), text);
}

TEST(Csv, NonCanonicalInputStabilisesAfterOneEmission) {
    const MaskedMatrix m = parse("a , b\n 0.0001 ,\n2.50,  \n");
    const std::string once = emit(m);
    EXPECT_EQ(once, "a,b\n1e-04,\n2.5,\n");
    EXPECT_EQ(emit(parse(once)), once);
}

TEST(Csv, RandomRoundTripPreservesValues) {
    const MaskedMatrix m = random_masked(50, 4, 1);
    const std::string text = emit(m);
    const MaskedMatrix back = parse(text);
    EXPECT_EQ(back.mask, m.mask);
    EXPECT_EQ(back.zero_filled(), m.zero_filled());
    EXPECT_EQ(emit(back), text);
}

TEST(Csv, FileRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "gina_dataio_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "m.csv").string();
    const MaskedMatrix m = random_masked(10, 3, 2);
    save_csv(path, m);
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), emit(m));
    EXPECT_EQ(load_csv(path).mask, m.mask);
    std::filesystem::remove_all(dir);
}

TEST(Csv, RaggedRowRejected) {
    try {
        parse("a,b\n1,2\n3\n");
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(Csv, NonNumericCellRejected) {
    EXPECT_THROW(parse("a,b\n1,abc\n"), DataError);
    EXPECT_THROW(parse("a,b\n1,2x\n"), DataError);
}

TEST(Csv, MissingAuxCellRejected) { EXPECT_THROW(parse("a,aux_u\n1,\n"), DataError); }

TEST(Csv, MissingFileAndEmptyInput) {
    EXPECT_THROW(load_csv("/nonexistent/dir/file.csv"), DataError);
    EXPECT_THROW(parse(""), DataError);
}

TEST(Csv, BinaryColumnsDetected) {
    const MaskedMatrix m = parse("a,b\n1,0.5\n0,\n,1\n");
    EXPECT_EQ(m.kinds[0], ColumnKind::Binary);
    EXPECT_EQ(m.kinds[1], ColumnKind::Continuous);
}

TEST(Validate, CatchesInconsistentShapes) {
    MaskedMatrix m = random_masked(5, 3, 3);
    EXPECT_NO_THROW(m.validate());
    m.mask(0, 0) = 0.5;
    EXPECT_THROW(m.validate(), DataError);
    m = random_masked(5, 3, 3);
    m.mask = Tensor::Ones(4, 3);
    EXPECT_THROW(m.validate(), DataError);
}

TEST(Split, AllToTrain) {
    const MaskedMatrix m = random_masked(30, 4, 4);
    const SplitResult s = split(m, {1.0, 0.0, 0.0, 1, SplitUnit::ObservedEntry});
    EXPECT_EQ(s.train.mask, m.mask);
    EXPECT_EQ(s.val.mask.sum(), 0.0);
    EXPECT_EQ(s.test.mask.sum(), 0.0);
}

TEST(Split, EntriesPartitioned) {
    const MaskedMatrix m = random_masked(40, 5, 5);
    const SplitResult s = split(m, {0.7, 0.2, 0.1, 3, SplitUnit::ObservedEntry});
    EXPECT_EQ(s.train.mask + s.val.mask + s.test.mask, m.mask);
    EXPECT_EQ(s.train.mask.cwiseProduct(s.val.mask).sum(), 0.0);
    EXPECT_EQ(s.train.mask.cwiseProduct(s.test.mask).sum(), 0.0);
    EXPECT_NEAR(s.train.mask.sum() / m.mask.sum(), 0.7, 0.01);
}

TEST(Split, RowsPartitioned) {
    MaskedMatrix m = random_masked(25, 2, 6);
    for (Eigen::Index i = 0; i < 25; ++i) m.values(i, 0) = static_cast<double>(i), m.mask(i, 0) = 1.0;
    const SplitResult s = split(m, {0.6, 0.2, 0.2, 7, SplitUnit::Row});
    EXPECT_EQ(s.train.rows() + s.val.rows() + s.test.rows(), 25);
    std::set<double> seen;
    for (const MaskedMatrix* part : {&s.train, &s.val, &s.test})
        for (Eigen::Index i = 0; i < part->rows(); ++i) EXPECT_TRUE(seen.insert(part->values(i, 0)).second);
    EXPECT_EQ(seen.size(), 25u);
}

TEST(Split, Deterministic) {
    const MaskedMatrix m = random_masked(30, 3, 8);
    const SplitSpec spec{0.5, 0.25, 0.25, 11, SplitUnit::ObservedEntry};
    EXPECT_EQ(split(m, spec).test.mask, split(m, spec).test.mask);
    SplitSpec other = spec;
    other.seed = 12;
    EXPECT_NE(split(m, spec).test.mask, split(m, other).test.mask);
}

TEST(Split, InvalidFractions) {
    const MaskedMatrix m = random_masked(10, 2, 9);
    EXPECT_THROW(split(m, {0.5, 0.5, 0.5, 0, SplitUnit::Row}), ConfigError);
    EXPECT_THROW(split(m, {-0.1, 0.6, 0.5, 0, SplitUnit::Row}), ConfigError);
    const MaskedMatrix tiny = random_masked(2, 1, 9);
    EXPECT_THROW(split(tiny, {0.8, 0.1, 0.1, 0, SplitUnit::Row}), DataError);
}

TEST(Rescale, MapsRangeOntoUnitInterval) {
    const MaskedMatrix m = parse("a,b\n1,5\n3,\n");
    const auto [r, scale] = rescale_ratings(m, 1.0, 5.0);
    EXPECT_EQ(r.values(0, 0), 0.0);
    EXPECT_EQ(r.values(0, 1), 1.0);
    EXPECT_EQ(r.values(1, 0), 0.5);
    EXPECT_EQ(r.mask, m.mask);
    EXPECT_EQ(scale.inverse(0.5), 3.0);
    EXPECT_EQ(scale.inverse(scale.forward(4.2)), 4.2);
}

TEST(Rescale, RejectsOutOfRangeAndBadBounds) {
    const MaskedMatrix m = parse("a\n6\n");
    EXPECT_THROW(rescale_ratings(m, 1.0, 5.0), DataError);
    EXPECT_THROW(rescale_ratings(m, 5.0, 5.0), ConfigError);
    // unobserved cells are never range-checked
    const MaskedMatrix hole = parse("a,b\n2,\n");
    EXPECT_NO_THROW(rescale_ratings(hole, 1.0, 5.0));
}

TEST(Aux, MetadataAndMaskSources) {
    const MaskedMatrix m = parse("a,b,aux_u,aux_v\n1,,0.5,2\n,3,1,4\n");
    Tensor expected(2, 2);
    expected << 0.5, 2, 1, 4;
    EXPECT_EQ(assemble_aux(m, AuxSource::Metadata), expected);
    EXPECT_EQ(assemble_aux(m, AuxSource::Mask), m.mask);
    const MaskedMatrix bare = parse("a\n1\n");
    EXPECT_THROW(assemble_aux(bare, AuxSource::Metadata), DataError);
}

TEST(Aux, MaskSnapshotDoesNotTrackLaterChanges) {
    MaskedMatrix m = parse("a,b\n1,\n");
    const Tensor u = assemble_aux(m, AuxSource::Mask);
    m.mask(0, 1) = 1.0;
    EXPECT_EQ(u(0, 1), 0.0);
}
