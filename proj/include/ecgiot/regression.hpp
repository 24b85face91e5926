#pragma once

// Ordinary least squares for R ~ intercept + S + T + Age and the error
// metrics used to score held-out predictions.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ecgiot/analytics.hpp"
#include "ecgiot/error.hpp"

namespace ecgiot::regression {

class RegressionError : public Error {
public:
    using Error::Error;
};

class SingularDesignError : public RegressionError {
public:
    using RegressionError::RegressionError;
};

inline const std::vector<std::string> kDefaultPredictors{"S", "T", "Age"};
inline const std::vector<std::size_t> kDefaultTestIndices{2, 5, 17, 19, 12};

struct LinearModel {
    double intercept = 0.0;
    std::vector<std::pair<std::string, double>> coefficients;  // predictor order
    std::string target = "R";
    std::size_t train_rows = 0;

    double predict(std::span<const double> x) const;
    std::vector<std::string> predictors() const;
};

// Solves (X'X) b = X'y for an intercept column plus the given predictors.
// Needs at least 4 rows; throws SingularDesignError on a rank-deficient design.
LinearModel fit_ols(const std::vector<std::vector<double>>& rows, std::span<const double> targets,
                    std::vector<std::string> predictor_names = kDefaultPredictors);

// Reads predictor and target columns out of a dataset.
LinearModel fit_ols(const analytics::Dataset& train, const std::vector<std::string>& predictors = kDefaultPredictors,
                    const std::string& target = "R");

double predict(const LinearModel& model, std::span<const double> x);
// Uses the model's predictor names to pick values from a record.
double predict(const LinearModel& model, const PqrstRecord& record);

// Max over design columns of |X'(y - Xb)|.
double residual_orthogonality(const LinearModel& model, const std::vector<std::vector<double>>& rows,
                              std::span<const double> targets);

struct EvalReport {
    double mae = 0.0;
    double mse = 0.0;
    std::optional<double> accuracy_pct;  // 100 * R^2; undefined for constant actuals
    std::vector<std::pair<double, double>> pairs;  // (actual, predicted)
};

EvalReport evaluate(std::span<const double> actuals, std::span<const double> predictions);

struct SplitSpec {
    std::vector<std::size_t> test_indices;
    void validate(std::size_t rows) const;
};

struct Split {
    analytics::Dataset train;
    analytics::Dataset test;
};

Split split(const analytics::Dataset& data, const SplitSpec& spec);

// Model documents are JSON.
nlohmann::json to_json(const LinearModel& model);
LinearModel model_from_json(const nlohmann::json& j);
void save_model(const LinearModel& model, const std::filesystem::path& path);
LinearModel load_model(const std::filesystem::path& path);

}  // namespace ecgiot::regression
