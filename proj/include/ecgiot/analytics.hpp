#pragma once

// Descriptive statistics, box-plot outliers, correlation/covariance and score
// quality bands over a table of PQRST records.

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ecgiot/error.hpp"
#include "ecgiot/records.hpp"

namespace ecgiot::analytics {

class AnalyticsError : public Error {
public:
    using Error::Error;
};

inline constexpr std::array<std::string_view, 7> kColumns{"RecordNo", "Age", "P", "Q", "R", "S", "T"};

// Accepts the canonical names above, case-insensitively, plus "Record No".
std::optional<std::size_t> column_index(std::string_view name);

class Dataset {
public:
    Dataset() = default;
    explicit Dataset(std::vector<PqrstRecord> rows) : rows_(std::move(rows)) {}

    static Dataset from_csv(std::string_view text) { return Dataset(parse_csv(text)); }

    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }
    const std::vector<PqrstRecord>& records() const { return rows_; }

    double value(std::size_t row, std::size_t column) const;
    std::vector<double> column(std::size_t index) const;
    // Throws AnalyticsError for an unknown name.
    std::vector<double> column(std::string_view name) const;

    Dataset subset(std::span<const std::size_t> rows) const;

private:
    std::vector<PqrstRecord> rows_;
};

struct ColumnStats {
    std::string name;
    std::size_t count = 0;
    double mean = 0, std = 0, min = 0, q25 = 0, q50 = 0, q75 = 0, max = 0;
};

struct StatsSummary {
    std::vector<ColumnStats> columns;
    const ColumnStats& operator[](std::string_view name) const;
};

// Linear interpolation at fractional index f*(n-1) of an ascending sample.
double quantile_sorted(std::span<const double> sorted, double f);
double mean(std::span<const double> x);
// n-1 divisor; 0 for a single value.
double sample_std(std::span<const double> x);
double sample_covariance(std::span<const double> x, std::span<const double> y);
// nullopt when either column has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

// Throws AnalyticsError on an empty dataset.
StatsSummary describe(const Dataset& data);

// Rows outside [q25 - k*IQR, q75 + k*IQR].
std::vector<std::size_t> iqr_outliers(const Dataset& data, std::string_view column, double k = 1.5);

// Drops every row flagged on any column except RecordNo.
Dataset drop_outliers(const Dataset& data, double k = 1.5);

struct Matrix {
    std::vector<std::string> names;
    std::vector<std::vector<std::optional<double>>> values;  // nullopt = undefined

    std::optional<double> at(std::string_view row, std::string_view col) const;
};

// Both need at least two rows.
Matrix correlation_matrix(const Dataset& data);
Matrix covariance_matrix(const Dataset& data);

struct RankEntry {
    std::string column;
    std::optional<double> correlation;
};

// Columns other than RecordNo (target included) by descending correlation
// with the target; ties keep column order, undefined entries go last.
std::vector<RankEntry> rank_against(const Dataset& data, std::string_view target = "R");

enum class Quality { Excellent, Acceptable, Poor };
const char* quality_name(Quality q);

struct QualityThresholds {
    double excellent = 96.0;
    double acceptable = 85.0;
    void validate() const;
};

Quality classify_quality(const PqrstRecord& record, const QualityThresholds& th = {});

struct QualityDistribution {
    QualityThresholds thresholds;
    std::array<std::size_t, 3> counts{};  // indexed by Quality
    std::size_t total = 0;

    std::size_t count(Quality q) const { return counts[static_cast<std::size_t>(q)]; }
    double percentage(Quality q) const;
};

QualityDistribution quality_distribution(const Dataset& data, const QualityThresholds& th = {});

// Everything the stats endpoint and the analyze command report.
struct Report {
    std::size_t rows = 0;
    StatsSummary stats;
    Matrix correlation;
    Matrix covariance;
    std::vector<RankEntry> rank;
    QualityDistribution quality;
};

// correlation, covariance and rank are left empty for a single row.
Report analyze(const Dataset& data, const QualityThresholds& th = {}, std::string_view target = "R");

nlohmann::json to_json(const Report& report);

enum class ReportKind { Stats, Corr, Cov, Rank, Quality };
std::optional<ReportKind> report_kind_from_name(std::string_view name);

// Full precision unless decimals is set. Undefined values print as NaN.
std::string format_number(std::optional<double> v, std::optional<int> decimals = std::nullopt);
std::string render_text(const Report& report, ReportKind kind, std::optional<int> decimals = std::nullopt);
std::string render_csv(const Report& report, ReportKind kind, std::optional<int> decimals = std::nullopt);

}  // namespace ecgiot::analytics
