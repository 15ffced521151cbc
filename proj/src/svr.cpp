#include "hwopt/svr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "hwopt/fileio.hpp"

namespace hwopt {

using nlohmann::json;

std::vector<double> encode_features(const Architecture& arch, std::size_t max_layers) {
    if (arch.layers.size() > max_layers)
        throw TooManyLayers("architecture has " + std::to_string(arch.layers.size()) +
                            " layers, encoder is sized for " + std::to_string(max_layers));
    std::vector<double> f;
    f.reserve(1 + 5 * max_layers);
    f.push_back(static_cast<double>(arch.resolution));
    for (const auto& l : arch.layers) {
        f.push_back(static_cast<double>(l.kernel.k));
        f.push_back(static_cast<double>(l.stride));
        f.push_back(static_cast<double>(l.in_ch));
        f.push_back(static_cast<double>(l.out_ch));
        f.push_back(l.skipped ? 1.0 : 0.0);
    }
    f.resize(1 + 5 * max_layers, 0.0);
    return f;
}

Dataset Dataset::from_csv(const std::filesystem::path& path) {
    auto rows = read_csv(path);
    if (rows.size() < 2)
        throw ParseError("dataset " + path.string() + " needs a header and at least one row");
    const auto& header = rows[0];
    if (header.size() < 2 || header.back() != "accuracy")
        throw ParseError("dataset " + path.string() + ": last column must be 'accuracy'");

    Dataset d;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != header.size())
            throw ParseError("dataset row " + std::to_string(i + 1) + ": wrong column count");
        std::vector<double> x;
        for (std::size_t c = 0; c + 1 < rows[i].size(); ++c)
            x.push_back(to_double(rows[i][c], header[c]));
        d.x.push_back(std::move(x));
        d.y.push_back(to_double(rows[i].back(), "accuracy"));
    }
    return d;
}

void Dataset::to_csv(const std::filesystem::path& path) const {
    std::string out;
    std::size_t dims = x.empty() ? 0 : x[0].size();
    for (std::size_t c = 0; c < dims; ++c) out += "f" + std::to_string(c) + ",";
    out += "accuracy\n";
    char buf[64];
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (double v : x[i]) {
            std::snprintf(buf, sizeof buf, "%.17g", v);
            out += buf;
            out += ",";
        }
        std::snprintf(buf, sizeof buf, "%.17g", y[i]);
        out += buf;
        out += "\n";
    }
    write_text_file(path, out);
}

namespace {

double rbf(const std::vector<double>& a, const std::vector<double>& b, double gamma) {
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        sq += d * d;
    }
    return std::exp(-gamma * sq);
}

// SMO on the 2n-variable dual: gamma_i in [0,C] with labels +1 (up slack)
// for i < n and -1 (down slack) for i >= n, p_i = eps - y_i * t_(i mod n),
// constraint sum(y_i gamma_i) = 0. Repeatedly takes the maximal violating
// pair and solves the two-variable subproblem exactly.
struct SmoResult {
    std::vector<double> beta; // per sample: alpha - alpha*
    double bias = 0.0;
    int iterations = 0;
};

SmoResult solve_smo(const std::vector<std::vector<double>>& x, const std::vector<double>& t,
                    double cost, double epsilon, double gamma, double tol) {
    const std::size_t n = x.size();
    const std::size_t nn = 2 * n;

    std::vector<double> kernel(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j)
            kernel[i * n + j] = kernel[j * n + i] = rbf(x[i], x[j], gamma);
    auto kval = [&](std::size_t a, std::size_t b) { return kernel[(a % n) * n + (b % n)]; };
    auto yof = [&](std::size_t a) { return a < n ? 1.0 : -1.0; };

    std::vector<double> alpha(nn, 0.0);
    std::vector<double> grad(nn);
    for (std::size_t i = 0; i < nn; ++i)
        grad[i] = epsilon - yof(i) * t[i % n];

    const long long max_iter = std::max<long long>(100'000, 200LL * static_cast<long long>(nn));
    SmoResult result;
    double m_val = 0.0, big_m_val = 0.0;
    while (result.iterations < max_iter) {
        // Maximal violating pair over -y*grad.
        std::size_t i_up = nn, j_low = nn;
        double up_best = -std::numeric_limits<double>::infinity();
        double low_best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < nn; ++k) {
            double v = -yof(k) * grad[k];
            bool in_up = (yof(k) > 0 && alpha[k] < cost) || (yof(k) < 0 && alpha[k] > 0);
            bool in_low = (yof(k) > 0 && alpha[k] > 0) || (yof(k) < 0 && alpha[k] < cost);
            if (in_up && v > up_best) {
                up_best = v;
                i_up = k;
            }
            if (in_low && v < low_best) {
                low_best = v;
                j_low = k;
            }
        }
        m_val = up_best;
        big_m_val = low_best;
        if (i_up == nn || j_low == nn || m_val - big_m_val <= tol) break;

        std::size_t i = i_up, j = j_low;
        double yi = yof(i), yj = yof(j);
        double quad = kval(i, i) + kval(j, j) - 2.0 * kval(i, j);
        if (quad < 1e-12) quad = 1e-12;
        double d = (m_val - big_m_val) / quad; // descent step along y_i e_i - y_j e_j

        // Box: alpha_i + y_i d in [0,C], alpha_j - y_j d in [0,C].
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        if (yi > 0) {
            lo = std::max(lo, -alpha[i]);
            hi = std::min(hi, cost - alpha[i]);
        } else {
            lo = std::max(lo, alpha[i] - cost);
            hi = std::min(hi, alpha[i]);
        }
        if (yj > 0) {
            lo = std::max(lo, alpha[j] - cost);
            hi = std::min(hi, alpha[j]);
        } else {
            lo = std::max(lo, -alpha[j]);
            hi = std::min(hi, cost - alpha[j]);
        }
        d = std::clamp(d, lo, hi);
        if (d == 0.0) break;

        alpha[i] += yi * d;
        alpha[j] -= yj * d;
        for (std::size_t k = 0; k < nn; ++k)
            grad[k] += d * yof(k) * (kval(k, i) - kval(k, j));
        ++result.iterations;
    }

    result.bias = (m_val + big_m_val) / 2.0;
    result.beta.assign(n, 0.0);
    for (std::size_t s = 0; s < n; ++s)
        result.beta[s] = alpha[s] - alpha[s + n];
    return result;
}

} // namespace

SvrModel train_svr(const Dataset& data, const SvrHyperparams& hyper, double kkt_tol) {
    const std::size_t n = data.size();
    if (n < 2)
        throw std::invalid_argument("training needs at least two samples");
    if (data.y.size() != n)
        throw DimensionMismatch("feature/target count mismatch");
    const std::size_t dims = data.x[0].size();
    for (const auto& row : data.x)
        if (row.size() != dims)
            throw DimensionMismatch("inconsistent feature vector lengths");
    if (hyper.cost <= 0 || hyper.epsilon < 0)
        throw std::invalid_argument("need cost > 0 and epsilon >= 0");

    SvrModel model;
    model.hyper = hyper;
    model.gamma = hyper.gamma > 0 ? hyper.gamma : 1.0 / static_cast<double>(dims);

    model.feature_mean.assign(dims, 0.0);
    model.feature_std.assign(dims, 0.0);
    for (const auto& row : data.x)
        for (std::size_t c = 0; c < dims; ++c) model.feature_mean[c] += row[c];
    for (std::size_t c = 0; c < dims; ++c) model.feature_mean[c] /= static_cast<double>(n);
    for (const auto& row : data.x)
        for (std::size_t c = 0; c < dims; ++c) {
            double d = row[c] - model.feature_mean[c];
            model.feature_std[c] += d * d;
        }
    for (std::size_t c = 0; c < dims; ++c) {
        model.feature_std[c] = std::sqrt(model.feature_std[c] / static_cast<double>(n));
        if (model.feature_std[c] == 0.0)
            model.warnings.push_back("feature " + std::to_string(c) +
                                     " has zero variance; dropped from the kernel");
    }

    std::vector<std::vector<double>> norm(n, std::vector<double>(dims, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < dims; ++c)
            if (model.feature_std[c] > 0.0)
                norm[i][c] = (data.x[i][c] - model.feature_mean[c]) / model.feature_std[c];

    auto smo = solve_smo(norm, data.y, hyper.cost, hyper.epsilon, model.gamma, kkt_tol);
    model.bias = smo.bias;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::fabs(smo.beta[i]) < 1e-12) continue;
        model.support_vectors.push_back(norm[i]);
        model.dual_coefs.push_back(smo.beta[i]);
    }
    return model;
}

double SvrModel::predict(const std::vector<double>& features) const {
    if (features.size() != feature_mean.size())
        throw DimensionMismatch("feature vector has " + std::to_string(features.size()) +
                                " dims, model expects " + std::to_string(feature_mean.size()));
    std::vector<double> norm(features.size(), 0.0);
    for (std::size_t c = 0; c < features.size(); ++c)
        if (feature_std[c] > 0.0) norm[c] = (features[c] - feature_mean[c]) / feature_std[c];

    double out = bias;
    for (std::size_t s = 0; s < support_vectors.size(); ++s)
        out += dual_coefs[s] * rbf(support_vectors[s], norm, gamma);
    return out;
}

std::string SvrModel::to_json(int indent) const {
    json j;
    j["kind"] = "svr_rbf";
    j["gamma"] = gamma;
    j["bias"] = bias;
    j["cost"] = hyper.cost;
    j["epsilon"] = hyper.epsilon;
    j["feature_mean"] = feature_mean;
    j["feature_std"] = feature_std;
    j["support_vectors"] = support_vectors;
    j["dual_coefs"] = dual_coefs;
    j["warnings"] = warnings;
    return j.dump(indent);
}

SvrModel SvrModel::from_json(const std::string& text) {
    try {
        json j = json::parse(text);
        if (j.value("kind", "") != std::string("svr_rbf"))
            throw ParseError("model kind must be 'svr_rbf'");
        SvrModel m;
        m.gamma = j.at("gamma").get<double>();
        m.bias = j.at("bias").get<double>();
        m.hyper.cost = j.at("cost").get<double>();
        m.hyper.epsilon = j.at("epsilon").get<double>();
        m.hyper.gamma = m.gamma;
        m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
        m.feature_std = j.at("feature_std").get<std::vector<double>>();
        m.support_vectors = j.at("support_vectors").get<std::vector<std::vector<double>>>();
        m.dual_coefs = j.at("dual_coefs").get<std::vector<double>>();
        m.warnings = j.value("warnings", std::vector<std::string>{});
        if (m.support_vectors.size() != m.dual_coefs.size())
            throw ParseError("model support vector and dual coef counts differ");
        for (const auto& sv : m.support_vectors)
            if (sv.size() != m.feature_mean.size())
                throw ParseError("model support vector dimension mismatch");
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("model JSON: ") + e.what());
    }
}

void SvrModel::save(const std::filesystem::path& path) const {
    write_text_file(path, to_json() + "\n");
}

SvrModel SvrModel::load(const std::filesystem::path& path) {
    return from_json(read_text_file(path));
}

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw DimensionMismatch("rmse needs two equal-length non-empty vectors");
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(sq / static_cast<double>(a.size()));
}

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw DimensionMismatch("spearman needs two equal-length vectors of size >= 2");
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t(0));
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(v.size(), 0.0);
        std::size_t i = 0;
        while (i < order.size()) {
            std::size_t j = i;
            while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
            double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = mid; // ties share mean rank
            i = j + 1;
        }
        return r;
    };
    auto ra = ranks(a), rb = ranks(b);
    double n = static_cast<double>(a.size());
    double ma = (n + 1) / 2.0;
    double num = 0.0, da = 0.0, db = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - ma);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - ma) * (rb[i] - ma);
    }
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / std::sqrt(da * db);
}

CrossValidation cross_validate(const Dataset& data, const std::vector<SvrHyperparams>& grid,
                               int folds, std::uint64_t seed) {
    if (grid.empty())
        throw std::invalid_argument("empty hyperparameter grid");
    if (folds < 2 || static_cast<std::size_t>(folds) > data.size())
        throw std::invalid_argument("fold count must be in [2, sample count]");

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    CrossValidation cv;
    bool first = true;
    for (const auto& hp : grid) {
        std::vector<double> fold_rmse;
        for (int f = 0; f < folds; ++f) {
            Dataset train, test;
            for (std::size_t i = 0; i < order.size(); ++i) {
                auto& dst = static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? test : train;
                dst.x.push_back(data.x[order[i]]);
                dst.y.push_back(data.y[order[i]]);
            }
            auto model = train_svr(train, hp);
            std::vector<double> pred;
            for (const auto& row : test.x) pred.push_back(model.predict(row));
            fold_rmse.push_back(rmse(pred, test.y));
        }
        double mean = std::accumulate(fold_rmse.begin(), fold_rmse.end(), 0.0) /
                      static_cast<double>(fold_rmse.size());
        bool take = first || mean < cv.best_rmse;
        if (!first && mean == cv.best_rmse) {
            auto key = [](const SvrHyperparams& h) {
                return std::tuple(h.cost, h.epsilon, h.gamma);
            };
            take = key(hp) < key(cv.best);
        }
        if (take) {
            cv.best = hp;
            cv.best_rmse = mean;
            cv.fold_rmse = std::move(fold_rmse);
        }
        first = false;
    }
    return cv;
}

} // namespace hwopt
