#include "kneebench/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "kneebench/posteval.hpp"
#include "kneebench/rng.hpp"

namespace kb {

namespace {

Model snapshot(Model& m) {
    Model copy = build(m.config, 0);
    auto src_params = m.named_params();
    auto dst_params = copy.named_params();
    for (std::size_t i = 0; i < src_params.size(); ++i)
        dst_params[i].second->data = src_params[i].second->data;
    auto src_bufs = m.named_buffers();
    auto dst_bufs = copy.named_buffers();
    for (std::size_t i = 0; i < src_bufs.size(); ++i)
        *dst_bufs[i].second = *src_bufs[i].second;
    return copy;
}

} // namespace

void TrainConfig::validate() const {
    if (alpha <= 0.0)
        throw ConfigError("train config: alpha must be positive");
    if (batch_size < 1)
        throw ConfigError("train config: batch_size must be >= 1");
    if (epochs < 1)
        throw ConfigError("train config: epochs must be >= 1");
    if (halve_every < 1)
        throw ConfigError("train config: halve_every must be >= 1");
    if (eval_every < 1)
        throw ConfigError("train config: eval_every must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0)
        throw ConfigError("train config: val_fraction must be in [0,1)");
}

double soft_f1(const std::vector<double>& p_hat, const std::vector<double>& p, bool as_printed) {
    if (p_hat.size() != p.size())
        throw ShapeMismatch("soft_f1: length mismatch");
    double overlap = 0.0, sum_hat = 0.0, sum_p = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        overlap += p_hat[i] * p[i];
        sum_hat += p_hat[i];
        sum_p += p[i];
    }
    const double denom = sum_hat + sum_p;
    if (denom == 0.0)
        throw EmptyLabel("soft_f1: empty label and prediction");
    return (as_printed ? 1.0 : 2.0) * overlap / denom;
}

double loss_value(double f1, double alpha) {
    return alpha / std::max(f1, kLossEps) + 1.0 - f1;
}

double lr_schedule(std::size_t epoch, double lr0, std::size_t halve_every) {
    return lr0 * std::pow(0.5, static_cast<double>(epoch / halve_every));
}

std::vector<double> label_vector(const Sample& sample) {
    std::vector<double> p(sample.size(), 0.0);
    for (std::size_t i : sample.knee_indices)
        p[i] = 1.0;
    return p;
}

ag::TensorPtr soft_f1_loss(ag::Graph& g, const ag::TensorPtr& probs,
                           const std::vector<std::vector<double>>& labels,
                           const TrainConfig& cfg) {
    const std::size_t B = probs->shape[0], L = probs->shape[2];
    auto loss = ag::make_tensor({1});
    const double factor = cfg.soft_f1_as_printed ? 1.0 : 2.0;
    auto f1s = std::make_shared<std::vector<double>>(B);
    auto sums = std::make_shared<std::vector<double>>(2 * B); // per sample: overlap, denom
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        double overlap = 0.0, sum_hat = 0.0, sum_p = 0.0;
        const double* ph = probs->data.data() + b * L;
        for (std::size_t i = 0; i < L; ++i) {
            overlap += ph[i] * labels[b][i];
            sum_hat += ph[i];
            sum_p += labels[b][i];
        }
        if (sum_p == 0.0)
            throw EmptyLabel("training loss: sample without knee labels");
        const double denom = sum_hat + sum_p;
        const double f1 = factor * overlap / denom;
        (*f1s)[b] = f1;
        (*sums)[2 * b] = overlap;
        (*sums)[2 * b + 1] = denom;
        total += cfg.plain_loss ? 1.0 - f1 : loss_value(f1, cfg.alpha);
    }
    loss->data[0] = total / static_cast<double>(B);

    return g.custom({probs}, loss, [=]() {
        probs->ensure_grad();
        const double gscale = loss->grad[0] / static_cast<double>(B);
        for (std::size_t b = 0; b < B; ++b) {
            const double f1 = (*f1s)[b];
            const double overlap = (*sums)[2 * b];
            const double denom = (*sums)[2 * b + 1];
            // dLoss/dF1; the 1/F1 term is clamped below kLossEps
            double dl_df = -1.0;
            if (!cfg.plain_loss && f1 > kLossEps)
                dl_df += -cfg.alpha / (f1 * f1);
            double* gp = probs->grad.data() + b * L;
            for (std::size_t i = 0; i < L; ++i) {
                const double df_dp =
                    factor * (labels[b][i] * denom - overlap) / (denom * denom);
                gp[i] += gscale * dl_df * df_dp;
            }
        }
    });
}

TrainResult train(Model& model, const Dataset& train_set, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n = train_set.samples.size();
    if (n == 0)
        throw ConfigError("train: empty training set");
    for (const auto& s : train_set.samples) {
        if (s.size() != model.config.length)
            throw ShapeMismatch("train: sample length does not match model length");
        if (s.knee_indices.empty())
            throw EmptyLabel("train: unlabeled sample " + s.id);
    }

    // deterministic validation slice: shuffle once, hold out the tail
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(Rng::derive(cfg.seed, 0x76616c69) /* "vali" */);
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(order[i], order[split_rng.uniform_int(0, static_cast<std::int64_t>(i))]);
    const auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * n));
    std::vector<std::size_t> train_idx(order.begin(), order.end() - n_val);
    std::vector<std::size_t> val_idx(order.end() - n_val, order.end());

    const std::size_t L = model.config.length;
    auto params = model.named_params();
    std::vector<ag::AdaDeltaState> states(params.size());
    for (auto& st : states) {
        st.rho = cfg.rho;
        st.eps = 1e-6;
    }

    TrainResult result{snapshot(model), snapshot(model), {}};
    double best_val = -1.0;
    std::size_t evals_since_best = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg.lr0, cfg.halve_every);
        Rng shuffle_rng(Rng::derive(cfg.seed, 0x65706f00 + epoch));
        std::vector<std::size_t> idx = train_idx;
        for (std::size_t i = idx.size() - 1; i > 0; --i)
            std::swap(idx[i], idx[shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i))]);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
            const std::size_t B = std::min(cfg.batch_size, idx.size() - start);
            auto batch = ag::make_tensor({B, 2, L});
            std::vector<std::vector<double>> labels(B);
            for (std::size_t b = 0; b < B; ++b) {
                const Sample& s = train_set.samples[idx[start + b]];
                std::copy(s.xs.begin(), s.xs.end(), batch->data.begin() + (b * 2) * L);
                std::copy(s.ys_noisy.begin(), s.ys_noisy.end(),
                          batch->data.begin() + (b * 2 + 1) * L);
                labels[b] = label_vector(s);
            }
            ag::Graph g;
            auto probs = forward(model, g, batch, true);
            auto loss = soft_f1_loss(g, probs, labels, cfg);
            if (!std::isfinite(loss->data[0]))
                throw NonFiniteLoss("train: non-finite loss at epoch " + std::to_string(epoch) +
                                    " batch " + std::to_string(batches));
            for (auto& [name, p] : params) {
                p->ensure_grad();
                p->zero_grad();
            }
            g.backward(loss);
            for (std::size_t pi = 0; pi < params.size(); ++pi) {
                states[pi].lr = lr;
                adadelta_step(params[pi].second->data, params[pi].second->grad, states[pi]);
            }
            loss_sum += loss->data[0];
            ++batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;

        const bool eval_now = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
        if (eval_now && !val_idx.empty()) {
            double f1_sum = 0.0;
            for (std::size_t vi : val_idx) {
                const Sample& s = train_set.samples[vi];
                const auto pred = unet_detect(model, s, {});
                f1_sum += f1_at_tolerance(pred, s.knee_indices, 2);
            }
            const double val_f1 = f1_sum / static_cast<double>(val_idx.size());
            stats.val_f1_at_2 = val_f1;
            if (val_f1 > best_val) {
                best_val = val_f1;
                result.best_model = snapshot(model);
                evals_since_best = 0;
            } else {
                ++evals_since_best;
            }
        }
        result.history.push_back(stats);
        if (cfg.early_stop && evals_since_best >= *cfg.early_stop)
            break;
    }

    result.final_model = snapshot(model);
    if (val_idx.empty())
        result.best_model = snapshot(model);
    return result;
}

void write_history(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("write_history: cannot open " + path);
    char buf[96];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t", h.epoch, h.lr, h.mean_loss);
        out << buf;
        if (h.val_f1_at_2) {
            std::snprintf(buf, sizeof buf, "%.17g", *h.val_f1_at_2);
            out << buf;
        } else {
            out << "NA";
        }
        out << '\n';
    }
    if (!out)
        throw IoError("write_history: write failed for " + path);
}

} // namespace kb
