#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <sstream>

#include "alasso/dataset.hpp"

using namespace alasso;

namespace {

RawSeriesTable make_raw(std::size_t T, std::size_t p2, std::size_t p3, std::mt19937_64& gen) {
    std::normal_distribution<double> z;
    RawSeriesTable raw;
    raw.names.push_back("y");
    for (std::size_t j = 0; j < p2; ++j) raw.names.push_back("w" + std::to_string(j + 1));
    for (std::size_t j = 0; j < p3; ++j) raw.names.push_back("x" + std::to_string(j + 1));
    raw.columns.assign(1 + p2 + p3, std::vector<double>(T));
    for (auto& c : raw.columns)
        for (auto& v : c) v = z(gen);
    return raw;
}

ModelSpec spec_of(std::size_t p1, std::size_t p2, std::size_t p3) {
    ModelSpec s;
    s.ar_lags = p1;
    s.contemporaneous = p2;
    s.lagged = p3;
    return s;
}

}  // namespace

TEST(BuildDesign, EntriesMatchLagDefinitionAtRandomPositions) {
    std::mt19937_64 gen(11);
    for (int rep = 0; rep < 40; ++rep) {
        const std::size_t p1 = gen() % 4, p2 = gen() % 4, p3 = 1 + gen() % 3;
        const std::size_t T = 30 + gen() % 50;
        const auto raw = make_raw(T, p2, p3, gen);
        const auto d = build_design(raw, spec_of(p1, p2, p3));
        const std::size_t trim = std::max<std::size_t>(p1, 1);
        ASSERT_EQ(d.n(), T - trim);
        ASSERT_EQ(d.p(), p1 + p2 + p3);
        for (int k = 0; k < 50; ++k) {
            const std::size_t row = gen() % d.n();
            const std::size_t col = gen() % d.p();
            const std::size_t t = row + trim;
            double expected;
            if (col < p1) expected = raw.columns[0][t - (col + 1)];
            else if (col < p1 + p2) expected = raw.columns[1 + (col - p1)][t];
            else expected = raw.columns[1 + p2 + (col - p1 - p2)][t - 1];
            EXPECT_EQ(d.z(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(col)), expected);
            EXPECT_EQ(d.y(static_cast<Eigen::Index>(row)), raw.columns[0][t]);
        }
    }
}

TEST(BuildDesign, GeneratesColumnNames) {
    std::mt19937_64 gen(1);
    const auto d = build_design(make_raw(20, 1, 2, gen), spec_of(2, 1, 2));
    const std::vector<std::string> expected{"y_lag1", "y_lag2", "w1", "x1_lag1", "x2_lag1"};
    EXPECT_EQ(d.names, expected);
}

TEST(BuildDesign, KeepsExplicitNames) {
    std::mt19937_64 gen(1);
    auto s = spec_of(1, 1, 0);
    s.variable_names = {"a", "b"};
    const auto d = build_design(make_raw(20, 1, 0, gen), s);
    EXPECT_EQ(d.names, (std::vector<std::string>{"a", "b"}));
}

TEST(BuildDesign, InterceptDemeans) {
    std::mt19937_64 gen(2);
    auto raw = make_raw(60, 2, 1, gen);
    for (auto& v : raw.columns[1]) v += 5.0;
    for (auto& v : raw.columns[0]) v -= 3.0;
    auto s = spec_of(1, 2, 1);
    s.include_intercept = true;
    const auto d = build_design(raw, s);
    ASSERT_TRUE(d.centering.has_value());
    EXPECT_NEAR(d.y.mean(), 0.0, 1e-12);
    for (Eigen::Index j = 0; j < d.z.cols(); ++j) EXPECT_NEAR(d.z.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(d.centering->z_means(1), 5.0, 1.0);
}

TEST(BuildDesign, RejectsMismatchedLengths) {
    std::mt19937_64 gen(3);
    auto raw = make_raw(20, 1, 1, gen);
    raw.columns[2].pop_back();
    EXPECT_THROW(build_design(raw, spec_of(1, 1, 1)), DataError);
}

TEST(BuildDesign, RejectsWrongColumnCount) {
    std::mt19937_64 gen(3);
    EXPECT_THROW(build_design(make_raw(20, 1, 1, gen), spec_of(1, 2, 1)), DataError);
}

TEST(BuildDesign, RejectsNonFinite) {
    std::mt19937_64 gen(4);
    auto raw = make_raw(20, 1, 1, gen);
    raw.columns[1][7] = std::numeric_limits<double>::quiet_NaN();
    try {
        build_design(raw, spec_of(1, 1, 1));
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("row 8"), std::string::npos);
    }
    raw.columns[1][7] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(build_design(raw, spec_of(1, 1, 1)), DataError);
}

TEST(BuildDesign, RejectsTooShortSeries) {
    std::mt19937_64 gen(5);
    EXPECT_THROW(build_design(make_raw(3, 0, 1, gen), spec_of(3, 0, 1)), DataError);
}

TEST(BuildDesign, RequiresMoreObservationsThanRegressors) {
    std::mt19937_64 gen(5);
    EXPECT_THROW(build_design(make_raw(6, 3, 1, gen), spec_of(1, 3, 1)), DataError);
}

TEST(BuildDesign, RejectsEmptyModel) {
    std::mt19937_64 gen(5);
    EXPECT_THROW(build_design(make_raw(20, 0, 0, gen), spec_of(0, 0, 0)), ContractError);
}

TEST(Csv, ParsesQuotedFieldsAndDateColumn) {
    std::istringstream in(
        "date,\"y\",\"w,1\",x\n"
        "2001-01,1.5,2,\"3\"\n"
        "2001-02,-1e-3,+4,5.25\r\n");
    ColumnMapping m;
    m.date_column = "date";
    const auto t = parse_csv(in, m);
    ASSERT_EQ(t.cols(), 3u);
    EXPECT_EQ(t.names[1], "w,1");
    EXPECT_EQ(t.labels, (std::vector<std::string>{"2001-01", "2001-02"}));
    EXPECT_EQ(t.columns[0][1], -1e-3);
    EXPECT_EQ(t.columns[1][1], 4.0);
    EXPECT_EQ(t.columns[2][1], 5.25);
}

TEST(Csv, SelectsColumnsInRequestedOrder) {
    std::istringstream in("a,b,c\n1,2,3\n4,5,6\n");
    ColumnMapping m;
    m.columns = {"c", "a"};
    const auto t = parse_csv(in, m);
    EXPECT_EQ(t.names, (std::vector<std::string>{"c", "a"}));
    EXPECT_EQ(t.columns[0], (std::vector<double>{3, 6}));
}

TEST(Csv, MissingColumnIsAnError) {
    std::istringstream in("a,b\n1,2\n");
    ColumnMapping m;
    m.columns = {"z"};
    EXPECT_THROW(parse_csv(in, m), DataError);
}

TEST(Csv, DuplicateHeaderIsAnError) {
    std::istringstream in("a,a\n1,2\n");
    EXPECT_THROW(parse_csv(in, {}), DataError);
}

TEST(Csv, BadCellNamesRowAndColumn) {
    std::istringstream in("a,b\n1,2\n3,oops\n");
    try {
        parse_csv(in, {}, "file.csv");
        FAIL();
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos);
        EXPECT_NE(msg.find("'b'"), std::string::npos);
        EXPECT_NE(msg.find("file.csv"), std::string::npos);
    }
}

TEST(Csv, BlankCellAndNanAreErrors) {
    std::istringstream blank("a,b\n1,\n");
    EXPECT_THROW(parse_csv(blank, {}), DataError);
    std::istringstream nan("a,b\n1,nan\n");
    EXPECT_THROW(parse_csv(nan, {}), DataError);
}

TEST(Csv, RaggedRowIsAnError) {
    std::istringstream in("a,b\n1,2,3\n");
    EXPECT_THROW(parse_csv(in, {}), DataError);
}

TEST(Csv, MissingHeaderIsAnError) {
    std::istringstream in("");
    EXPECT_THROW(parse_csv(in, {}), DataError);
}

TEST(Csv, MissingFileIsIoError) {
    EXPECT_THROW(read_csv("/nonexistent/dir/file.csv"), IoError);
}

TEST(Csv, RoundTripIsBitExact) {
    std::mt19937_64 gen(99);
    std::uniform_int_distribution<std::uint64_t> bits;
    RawSeriesTable t;
    t.names = {"y", "w1", "x1"};
    t.columns.assign(3, {});
    for (int i = 0; i < 500; ++i) {
        for (auto& c : t.columns) {
            double v;
            do {
                const std::uint64_t b = bits(gen);
                std::memcpy(&v, &b, sizeof v);
            } while (!std::isfinite(v));
            c.push_back(v);
        }
        t.labels.push_back("t" + std::to_string(i));
    }
    t.columns[0][0] = 0.1;
    t.columns[1][0] = -0.0;
    t.columns[2][0] = std::numeric_limits<double>::denorm_min();
    std::stringstream buf;
    write_csv(buf, t);
    ColumnMapping m;
    m.date_column = "date";
    const auto back = parse_csv(buf, m);
    ASSERT_EQ(back.names, t.names);
    ASSERT_EQ(back.labels, t.labels);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t r = 0; r < t.rows(); ++r)
            ASSERT_EQ(std::memcmp(&back.columns[c][r], &t.columns[c][r], sizeof(double)), 0);
}
