#include "ecgiot/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace ecgiot::analytics {

using nlohmann::json;

namespace {

bool iequals(std::string_view a, std::string_view b)
{
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
           });
}

bool is_constant(std::span<const double> x)
{
    return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

std::size_t require_column(std::string_view name)
{
    const auto idx = column_index(name);
    if (!idx)
        throw AnalyticsError("unknown column '" + std::string(name) + "'");
    return *idx;
}

json number_or_null(std::optional<double> v)
{
    return v && std::isfinite(*v) ? json(*v) : json(nullptr);
}

json matrix_json(const Matrix& m)
{
    json values = json::array();
    for (const auto& row : m.values) {
        json r = json::array();
        for (const auto& v : row)
            r.push_back(number_or_null(v));
        values.push_back(std::move(r));
    }
    return {{"columns", m.names}, {"values", std::move(values)}};
}

std::string pad(const std::string& s, std::size_t width, bool left = false)
{
    if (s.size() >= width)
        return s;
    return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

// Rows of cells rendered as right-aligned columns (first column left-aligned).
std::string align(const std::vector<std::vector<std::string>>& rows)
{
    std::vector<std::size_t> widths;
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (widths.size() <= i)
                widths.push_back(0);
            widths[i] = std::max(widths[i], r[i].size());
        }
    std::string out;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i > 0)
                line += "  ";
            line += pad(r[i], widths[i], i == 0);
        }
        while (!line.empty() && line.back() == ' ')
            line.pop_back();
        out += line + '\n';
    }
    return out;
}

std::string join_csv(const std::vector<std::string>& cells)
{
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i)
        out += (i ? "," : "") + cells[i];
    return out + '\n';
}

std::vector<std::vector<std::string>> table(const Report& r, ReportKind kind, std::optional<int> d)
{
    std::vector<std::vector<std::string>> rows;
    switch (kind) {
    case ReportKind::Stats: {
        std::vector<std::string> header{"measure"};
        for (const auto& c : r.stats.columns)
            header.push_back(c.name);
        rows.push_back(header);
        const std::array<std::pair<const char*, double ColumnStats::*>, 8> measures{{
            {"mean", &ColumnStats::mean},
            {"std", &ColumnStats::std},
            {"min", &ColumnStats::min},
            {"25%", &ColumnStats::q25},
            {"50%", &ColumnStats::q50},
            {"75%", &ColumnStats::q75},
            {"max", &ColumnStats::max},
            {nullptr, nullptr},
        }};
        std::vector<std::string> count{"count"};
        for (const auto& c : r.stats.columns)
            count.push_back(std::to_string(c.count));
        rows.push_back(count);
        for (const auto& [label, member] : measures) {
            if (!label)
                break;
            std::vector<std::string> row{label};
            for (const auto& c : r.stats.columns)
                row.push_back(format_number(c.*member, d));
            rows.push_back(row);
        }
        break;
    }
    case ReportKind::Corr:
    case ReportKind::Cov: {
        const Matrix& m = kind == ReportKind::Corr ? r.correlation : r.covariance;
        std::vector<std::string> header{""};
        header.insert(header.end(), m.names.begin(), m.names.end());
        rows.push_back(header);
        for (std::size_t i = 0; i < m.names.size(); ++i) {
            std::vector<std::string> row{m.names[i]};
            for (const auto& v : m.values[i])
                row.push_back(format_number(v, d));
            rows.push_back(row);
        }
        break;
    }
    case ReportKind::Rank:
        rows.push_back({"column", "correlation"});
        for (const auto& e : r.rank)
            rows.push_back({e.column, format_number(e.correlation, d)});
        break;
    case ReportKind::Quality:
        rows.push_back({"band", "count", "percentage"});
        for (Quality q : {Quality::Excellent, Quality::Acceptable, Quality::Poor})
            rows.push_back({quality_name(q), std::to_string(r.quality.count(q)),
                            format_number(r.quality.percentage(q), d.value_or(2))});
        break;
    }
    return rows;
}

}  // namespace

std::optional<std::size_t> column_index(std::string_view name)
{
    if (iequals(name, "Record No") || iequals(name, "record_no"))
        return 0;
    for (std::size_t i = 0; i < kColumns.size(); ++i)
        if (iequals(name, kColumns[i]))
            return i;
    return std::nullopt;
}

double Dataset::value(std::size_t row, std::size_t column) const
{
    const PqrstRecord& r = rows_.at(row);
    switch (column) {
    case 0: return r.record_no;
    case 1: return r.age;
    case 2: return r.p;
    case 3: return r.q;
    case 4: return r.r;
    case 5: return r.s;
    case 6: return r.t;
    }
    throw AnalyticsError("column index out of range");
}

std::vector<double> Dataset::column(std::size_t index) const
{
    std::vector<double> out;
    out.reserve(rows_.size());
    for (std::size_t i = 0; i < rows_.size(); ++i)
        out.push_back(value(i, index));
    return out;
}

std::vector<double> Dataset::column(std::string_view name) const
{
    return column(require_column(name));
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const
{
    std::vector<PqrstRecord> out;
    for (std::size_t i : rows)
        out.push_back(rows_.at(i));
    return Dataset(std::move(out));
}

const ColumnStats& StatsSummary::operator[](std::string_view name) const
{
    for (const auto& c : columns)
        if (iequals(c.name, name))
            return c;
    throw AnalyticsError("unknown column '" + std::string(name) + "'");
}

double quantile_sorted(std::span<const double> sorted, double f)
{
    if (sorted.empty())
        throw AnalyticsError("quantile of an empty sample");
    const double pos = f * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double mean(std::span<const double> x)
{
    if (x.empty())
        throw AnalyticsError("mean of an empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_covariance(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw AnalyticsError("covariance of unequal-length columns");
    if (x.size() < 2)
        return 0.0;
    const double mx = mean(x), my = mean(y);
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += (x[i] - mx) * (y[i] - my);
    return s / static_cast<double>(x.size() - 1);
}

double sample_std(std::span<const double> x)
{
    return std::sqrt(sample_covariance(x, x));
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y)
{
    if (x.size() < 2 || is_constant(x) || is_constant(y))
        return std::nullopt;
    const double r = sample_covariance(x, y) / (sample_std(x) * sample_std(y));
    return std::clamp(r, -1.0, 1.0);
}

StatsSummary describe(const Dataset& data)
{
    if (data.empty())
        throw AnalyticsError("describe needs at least one row");
    StatsSummary out;
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        auto col = data.column(c);
        ColumnStats s;
        s.name = std::string(kColumns[c]);
        s.count = col.size();
        s.mean = mean(col);
        s.std = sample_std(col);
        std::sort(col.begin(), col.end());
        s.min = col.front();
        s.q25 = quantile_sorted(col, 0.25);
        s.q50 = quantile_sorted(col, 0.50);
        s.q75 = quantile_sorted(col, 0.75);
        s.max = col.back();
        out.columns.push_back(std::move(s));
    }
    return out;
}

std::vector<std::size_t> iqr_outliers(const Dataset& data, std::string_view column, double k)
{
    const auto col = data.column(column);
    if (col.empty())
        return {};
    auto sorted = col;
    std::sort(sorted.begin(), sorted.end());
    const double q25 = quantile_sorted(sorted, 0.25);
    const double q75 = quantile_sorted(sorted, 0.75);
    const double iqr = q75 - q25;
    std::vector<std::size_t> out;
    if (std::isinf(k))
        return out;
    const double lo = q25 - k * iqr, hi = q75 + k * iqr;
    for (std::size_t i = 0; i < col.size(); ++i)
        if (col[i] < lo || col[i] > hi)
            out.push_back(i);
    return out;
}

Dataset drop_outliers(const Dataset& data, double k)
{
    std::vector<bool> flagged(data.size(), false);
    for (std::size_t c = 1; c < kColumns.size(); ++c)
        for (std::size_t i : iqr_outliers(data, kColumns[c], k))
            flagged[i] = true;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (!flagged[i])
            keep.push_back(i);
    return data.subset(keep);
}

std::optional<double> Matrix::at(std::string_view row, std::string_view col) const
{
    const auto find = [&](std::string_view n) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (iequals(names[i], n))
                return i;
        throw AnalyticsError("unknown column '" + std::string(n) + "'");
    };
    return values[find(row)][find(col)];
}

namespace {

Matrix pairwise(const Dataset& data, bool correlation)
{
    if (data.size() < 2)
        throw AnalyticsError("correlation and covariance need at least two rows");
    Matrix m;
    std::vector<std::vector<double>> cols;
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        m.names.emplace_back(kColumns[c]);
        cols.push_back(data.column(c));
    }
    const std::size_t n = cols.size();
    m.values.assign(n, std::vector<std::optional<double>>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            std::optional<double> v;
            if (!correlation)
                v = sample_covariance(cols[i], cols[j]);
            else if (i == j)
                v = is_constant(cols[i]) ? std::nullopt : std::optional<double>(1.0);
            else
                v = pearson(cols[i], cols[j]);
            m.values[i][j] = m.values[j][i] = v;
        }
    return m;
}

}  // namespace

Matrix correlation_matrix(const Dataset& data)
{
    return pairwise(data, true);
}

Matrix covariance_matrix(const Dataset& data)
{
    return pairwise(data, false);
}

std::vector<RankEntry> rank_against(const Dataset& data, std::string_view target)
{
    const auto target_col = data.column(require_column(target));
    std::vector<RankEntry> out;
    for (std::size_t c = 1; c < kColumns.size(); ++c)
        out.push_back({std::string(kColumns[c]), pearson(data.column(c), target_col)});
    std::stable_sort(out.begin(), out.end(), [](const RankEntry& a, const RankEntry& b) {
        if (!a.correlation || !b.correlation)
            return a.correlation.has_value() && !b.correlation.has_value();
        return *a.correlation > *b.correlation;
    });
    return out;
}

const char* quality_name(Quality q)
{
    switch (q) {
    case Quality::Excellent: return "Excellent";
    case Quality::Acceptable: return "Acceptable";
    case Quality::Poor: return "Poor";
    }
    return "?";
}

void QualityThresholds::validate() const
{
    if (!(acceptable < excellent))
        throw ConfigError("quality thresholds", "acceptable must be below excellent");
    if (acceptable < 0 || excellent > 100)
        throw ConfigError("quality thresholds", "must lie within [0, 100]");
}

Quality classify_quality(const PqrstRecord& record, const QualityThresholds& th)
{
    const double m = record.mean_score();
    if (m >= th.excellent)
        return Quality::Excellent;
    if (m >= th.acceptable)
        return Quality::Acceptable;
    return Quality::Poor;
}

double QualityDistribution::percentage(Quality q) const
{
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(count(q)) / static_cast<double>(total);
}

QualityDistribution quality_distribution(const Dataset& data, const QualityThresholds& th)
{
    th.validate();
    QualityDistribution d;
    d.thresholds = th;
    for (const auto& r : data.records())
        ++d.counts[static_cast<std::size_t>(classify_quality(r, th))];
    d.total = data.size();
    return d;
}

Report analyze(const Dataset& data, const QualityThresholds& th, std::string_view target)
{
    Report r;
    r.rows = data.size();
    r.stats = describe(data);
    if (data.size() >= 2) {
        r.correlation = correlation_matrix(data);
        r.covariance = covariance_matrix(data);
        r.rank = rank_against(data, target);
    }
    r.quality = quality_distribution(data, th);
    return r;
}

json to_json(const Report& report)
{
    json stats = json::array();
    for (const auto& c : report.stats.columns)
        stats.push_back({{"column", c.name},
                         {"count", c.count},
                         {"mean", c.mean},
                         {"std", c.std},
                         {"min", c.min},
                         {"q25", c.q25},
                         {"q50", c.q50},
                         {"q75", c.q75},
                         {"max", c.max}});
    json rank = json::array();
    for (const auto& e : report.rank)
        rank.push_back({{"column", e.column}, {"correlation", number_or_null(e.correlation)}});
    json bands = json::object();
    for (Quality q : {Quality::Excellent, Quality::Acceptable, Quality::Poor})
        bands[quality_name(q)] = {{"count", report.quality.count(q)}, {"percentage", report.quality.percentage(q)}};
    return {{"rows", report.rows},
            {"stats", std::move(stats)},
            {"correlation", matrix_json(report.correlation)},
            {"covariance", matrix_json(report.covariance)},
            {"rank", std::move(rank)},
            {"quality",
             {{"thresholds",
               {{"excellent", report.quality.thresholds.excellent},
                {"acceptable", report.quality.thresholds.acceptable}}},
              {"total", report.quality.total},
              {"bands", std::move(bands)}}}};
}

std::optional<ReportKind> report_kind_from_name(std::string_view name)
{
    if (name == "stats")
        return ReportKind::Stats;
    if (name == "corr")
        return ReportKind::Corr;
    if (name == "cov")
        return ReportKind::Cov;
    if (name == "rank")
        return ReportKind::Rank;
    if (name == "quality")
        return ReportKind::Quality;
    return std::nullopt;
}

std::string format_number(std::optional<double> v, std::optional<int> decimals)
{
    if (!v || std::isnan(*v))
        return "NaN";
    if (decimals) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f", *decimals, *v);
        return buf;
    }
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, *v);
    return std::string(buf, res.ptr);
}

std::string render_text(const Report& report, ReportKind kind, std::optional<int> decimals)
{
    return align(table(report, kind, decimals));
}

std::string render_csv(const Report& report, ReportKind kind, std::optional<int> decimals)
{
    std::string out;
    for (const auto& row : table(report, kind, decimals))
        out += join_csv(row);
    return out;
}

}  // namespace ecgiot::analytics
