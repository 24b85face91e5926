#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ecgiot/analytics.hpp"
#include "testing.hpp"

using namespace ecgiot;
using namespace ecgiot::analytics;

namespace {

const std::vector<std::string> kNames{"RecordNo", "Age", "P", "Q", "R", "S", "T"};

PqrstRecord row(int n, int age, double p, double q, double r, double s, double t)
{
    return {n, age, p, q, r, s, t, "x", 0};
}

}  // namespace

TEST_CASE("describe: summary statistics of the reference table")
{
    const auto s = describe(testing::records());
    struct Expect {
        const char* col;
        double mean, std, min, q25, q50, q75, max;
    };
    const Expect rows[] = {
        {"RecordNo", 10.50, 5.92, 1, 5.75, 10.5, 15.25, 20},
        {"Age", 29.85, 8.86, 18, 22.75, 28.5, 36.25, 45},
        {"P", 97.06, 5.88, 78.50, 98.4375, 100, 100, 100},
        {"Q", 96.26, 7.57, 76.19, 98.4375, 100, 100, 100},
        {"R", 95.26, 8.33, 76.19, 93.53, 100, 100, 100},
        {"S", 96.51, 7.15, 76.19, 98.4375, 100, 100, 100},
        {"T", 97.66, 4.50, 85, 98.635, 100, 100, 100},
    };
    for (const auto& e : rows) {
        CAPTURE(e.col);
        const auto& c = s[e.col];
        CHECK(c.count == 20);
        CHECK(std::abs(c.mean - e.mean) <= 0.01);
        CHECK(std::abs(c.std - e.std) <= 0.01);
        CHECK(std::abs(c.min - e.min) <= 1e-9);
        CHECK(std::abs(c.q25 - e.q25) <= 0.01);
        CHECK(std::abs(c.q50 - e.q50) <= 1e-9);
        CHECK(std::abs(c.q75 - e.q75) <= 1e-9);
        CHECK(std::abs(c.max - e.max) <= 1e-9);
    }
    CHECK_THROWS_AS(s["nope"], AnalyticsError);
}

TEST_CASE("describe: edge shapes")
{
    CHECK_THROWS_AS(describe(Dataset{}), AnalyticsError);
    const auto one = describe(Dataset({row(1, 30, 90, 91, 92, 93, 94)}));
    CHECK(one["P"].std == 0);
    CHECK(one["P"].q25 == 90);
    CHECK(one["T"].max == 94);
}

TEST_CASE("quantile interpolation")
{
    const std::vector<double> v{1, 2, 3, 4};
    CHECK(quantile_sorted(v, 0.0) == 1);
    CHECK(quantile_sorted(v, 0.25) == doctest::Approx(1.75));
    CHECK(quantile_sorted(v, 0.5) == doctest::Approx(2.5));
    CHECK(quantile_sorted(v, 1.0) == 4);
}

TEST_CASE("outliers by interquartile fences")
{
    const auto d = testing::records();
    CHECK(iqr_outliers(d, "P") == std::vector<std::size_t>{0, 4, 6, 11, 18});
    CHECK(iqr_outliers(d, "P", INFINITY).empty());
    CHECK(iqr_outliers(d, "RecordNo").empty());
    CHECK_THROWS_AS(iqr_outliers(d, "Z"), AnalyticsError);

    const auto kept = drop_outliers(d);
    CHECK(kept.size() < d.size());
    for (const auto& name : kNames)
        if (name != "RecordNo")
            CHECK(iqr_outliers(d, name).size() <= d.size() - kept.size());
    CHECK(drop_outliers(d, INFINITY).size() == d.size());
}

TEST_CASE("correlation and covariance of the reference table")
{
    const auto d = testing::records();
    const auto corr = correlation_matrix(d);
    const auto cov = covariance_matrix(d);
    CHECK(*corr.at("Q", "S") == doctest::Approx(0.9893892903837227).epsilon(1e-12));
    CHECK(*corr.at("S", "Q") == *corr.at("Q", "S"));
    CHECK(*cov.at("RecordNo", "RecordNo") == doctest::Approx(35.0));
    CHECK(*cov.at("Age", "RecordNo") == doctest::Approx(23.2368).epsilon(1e-4));
    for (const auto& a : kNames) {
        CHECK(*corr.at(a, a) == 1.0);
        for (const auto& b : kNames) {
            CAPTURE(a);
            CAPTURE(b);
            CHECK(*corr.at(a, b) == doctest::Approx(*corr.at(b, a)));
            CHECK(*cov.at(a, b) == doctest::Approx(*cov.at(b, a)));
            const double expect = *cov.at(a, b) / std::sqrt(*cov.at(a, a) * *cov.at(b, b));
            CHECK(*corr.at(a, b) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(correlation_matrix(d.subset(std::vector<std::size_t>{0})), AnalyticsError);
}

TEST_CASE("constant columns have undefined correlation")
{
    const Dataset d({row(1, 30, 100, 90, 80, 100, 70), row(2, 40, 100, 95, 85, 100, 75),
                     row(3, 50, 100, 97, 86, 100, 90)});
    const auto corr = correlation_matrix(d);
    CHECK_FALSE(corr.at("P", "P"));
    CHECK_FALSE(corr.at("P", "Q"));
    CHECK(corr.at("Q", "R"));
    const auto rank = rank_against(d, "R");
    CHECK(rank.front().column == "R");
    CHECK_FALSE(rank[rank.size() - 1].correlation);
    CHECK_FALSE(rank[rank.size() - 2].correlation);
    CHECK_FALSE(pearson(std::vector<double>{1, 1}, std::vector<double>{1, 2}));
}

TEST_CASE("three-row hand computation")
{
    // x = 1,2,3 ; y = 2,4,7 -> cov = 2.5, var x = 1, var y = 6.333..
    const std::vector<double> x{1, 2, 3}, y{2, 4, 7};
    CHECK(sample_covariance(x, y) == doctest::Approx(2.5));
    CHECK(*pearson(x, y) == doctest::Approx(2.5 / std::sqrt(19.0 / 3.0)));
    CHECK(mean(y) == doctest::Approx(13.0 / 3.0));
}

TEST_CASE("rank against R")
{
    const auto rank = rank_against(testing::records());
    const std::vector<std::pair<std::string, double>> expect{
        {"R", 1.0}, {"Q", 0.846016}, {"S", 0.837237}, {"T", 0.347479}, {"Age", 0.287883}, {"P", 0.205213}};
    REQUIRE(rank.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
        CHECK(rank[i].column == expect[i].first);
        CHECK(std::abs(*rank[i].correlation - expect[i].second) < 1e-4);
    }
    CHECK_THROWS_AS(rank_against(testing::records(), "Nope"), AnalyticsError);
}

TEST_CASE("quality bands")
{
    const auto d = testing::records();
    const auto q = quality_distribution(d);
    CHECK(q.count(Quality::Excellent) == 14);
    CHECK(q.count(Quality::Acceptable) == 5);
    CHECK(q.count(Quality::Poor) == 1);
    CHECK(q.percentage(Quality::Excellent) == doctest::Approx(70.0));
    CHECK(q.percentage(Quality::Excellent) + q.percentage(Quality::Acceptable) + q.percentage(Quality::Poor) ==
          doctest::Approx(100.0));

    // Record 9 sits exactly on the lower threshold, record 7 on the upper.
    CHECK(classify_quality(d.records()[8]) == Quality::Acceptable);
    CHECK(classify_quality(d.records()[6]) == Quality::Excellent);
    CHECK(classify_quality(d.records()[10]) == Quality::Poor);

    CHECK_THROWS_AS((QualityThresholds{80, 90}.validate()), ConfigError);
    CHECK(quality_distribution(Dataset{}).percentage(Quality::Poor) == 0);
}

TEST_CASE("statistics are invariant to row order")
{
    const auto d = testing::records();
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(7);
    std::shuffle(order.begin(), order.end(), rng);
    const auto shuffled = d.subset(order);
    const auto a = analyze(d), b = analyze(shuffled);
    for (const auto& name : kNames) {
        CHECK(a.stats[name].mean == doctest::Approx(b.stats[name].mean));
        CHECK(a.stats[name].q25 == doctest::Approx(b.stats[name].q25));
        for (const auto& other : kNames)
            CHECK(*a.correlation.at(name, other) == doctest::Approx(*b.correlation.at(name, other)));
    }
    CHECK(a.quality.counts == b.quality.counts);
}

TEST_CASE("correlation is invariant under positive affine maps")
{
    const auto d = testing::records();
    const auto r = d.column("R");
    auto q = d.column("Q");
    const auto base = *pearson(q, r);
    for (auto& v : q)
        v = 3.5 * v - 40.0;
    CHECK(*pearson(q, r) == doctest::Approx(base).epsilon(1e-12));
    for (auto& v : q)
        v = -v;
    CHECK(*pearson(q, r) == doctest::Approx(-base).epsilon(1e-12));
}

TEST_CASE("report rendering")
{
    const auto rep = analyze(testing::records());
    const auto j = to_json(rep);
    CHECK(j["rows"] == 20);
    CHECK(j["quality"]["bands"]["Excellent"]["count"] == 14);
    CHECK(j["correlation"]["columns"].size() == 7);

    const auto csv = render_csv(rep, ReportKind::Rank, 4);
    CHECK(csv.find("Q,0.8460") != std::string::npos);
    CHECK(render_text(rep, ReportKind::Quality).find("Excellent") != std::string::npos);
    CHECK(format_number(std::nullopt) == "NaN");
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(2.0 / 3.0, 3) == "0.667");
    CHECK(report_kind_from_name("corr") == ReportKind::Corr);
    CHECK_FALSE(report_kind_from_name("pie"));

    const auto single = analyze(testing::records().subset(std::vector<std::size_t>{0}));
    CHECK(single.rank.empty());
    CHECK(to_json(single)["stats"].size() == 7);
}

TEST_CASE("column lookup")
{
    CHECK(column_index("Record No") == 0);
    CHECK(column_index("recordno") == 0);
    CHECK(column_index("age") == 1);
    CHECK(column_index("t") == 6);
    CHECK_FALSE(column_index("U"));
}
