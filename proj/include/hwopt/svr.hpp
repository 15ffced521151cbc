#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwopt/arch.hpp"

namespace hwopt {

struct TooManyLayers : std::runtime_error {
    explicit TooManyLayers(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& msg) : std::runtime_error(msg) {}
};

// [resolution] then per layer [k, stride, in_ch, out_ch, skipped], zero
// padded to max_layers: length 1 + 5*max_layers.
std::vector<double> encode_features(const Architecture& arch, std::size_t max_layers);

struct SvrHyperparams {
    double cost = 10.0;      // box constraint C
    double epsilon = 0.01;   // insensitive tube half-width
    double gamma = 0.0;      // RBF width; <= 0 means 1/num_features
};

struct Dataset {
    std::vector<std::vector<double>> x;
    std::vector<double> y;

    std::size_t size() const { return x.size(); }
    // CSV columns f0..fD,accuracy with a header row.
    static Dataset from_csv(const std::filesystem::path& path);
    void to_csv(const std::filesystem::path& path) const;
};

// Epsilon-insensitive RBF regressor; dual solved by pairwise coordinate
// steps on the maximal KKT violator until the gap is below the tolerance.
struct SvrModel {
    std::vector<std::vector<double>> support_vectors; // normalized space
    std::vector<double> dual_coefs;                   // |coef| <= cost
    double bias = 0.0;
    double gamma = 1.0;
    SvrHyperparams hyper;
    std::vector<double> feature_mean;
    std::vector<double> feature_std;  // 0 marks a dropped constant feature
    std::vector<std::string> warnings;

    double predict(const std::vector<double>& features) const;

    std::string to_json(int indent = 2) const;
    static SvrModel from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static SvrModel load(const std::filesystem::path& path);
};

SvrModel train_svr(const Dataset& data, const SvrHyperparams& hyper, double kkt_tol = 1e-3);

struct CrossValidation {
    SvrHyperparams best;
    double best_rmse = 0.0;
    std::vector<double> fold_rmse; // for the winning config
};

// k-fold over a seeded shuffle; grid of hyperparams ranked by mean RMSE,
// ties toward smaller cost, then epsilon, then gamma.
CrossValidation cross_validate(const Dataset& data, const std::vector<SvrHyperparams>& grid,
                               int folds, std::uint64_t seed);

double rmse(const std::vector<double>& a, const std::vector<double>& b);
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

} // namespace hwopt
