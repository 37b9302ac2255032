#include "kneebench/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace kb::ag {

namespace {

void check(bool ok, const char* msg) {
    if (!ok)
        throw ShapeMismatch(msg);
}

// Same-padding amount on the left; odd kernels pad symmetrically, even kernels
// pad one extra on the left.
std::size_t left_pad(std::size_t k) { return k / 2; }
std::size_t right_pad(std::size_t k) { return (k - 1) / 2; }

} // namespace

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

void Tensor::ensure_grad() {
    if (grad.size() != data.size())
        grad.assign(data.size(), 0.0);
}

TensorPtr make_tensor(std::vector<std::size_t> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    std::size_t n = 1;
    for (std::size_t d : shape)
        n *= d;
    t->shape = std::move(shape);
    t->data.assign(n, 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Graph::record(TensorPtr out, std::vector<TensorPtr> inputs,
                        std::function<void()> backward) {
    for (const auto& in : inputs)
        if (in == out)
            throw GraphCycle("op output aliases its own input");
    nodes_.push_back({out, std::move(inputs), std::move(backward)});
    return nodes_.back().out;
}

TensorPtr Graph::conv1d(const TensorPtr& input, const TensorPtr& weight, const TensorPtr& bias) {
    check(input->shape.size() == 3, "conv1d: input must be B x C x L");
    check(weight->shape.size() == 3, "conv1d: weight must be Cout x Cin x k");
    check(bias->shape.size() == 1, "conv1d: bias must be Cout");
    const std::size_t B = input->shape[0], Cin = input->shape[1], L = input->shape[2];
    const std::size_t Cout = weight->shape[0], k = weight->shape[2];
    check(weight->shape[1] == Cin, "conv1d: channel mismatch");
    check(bias->shape[0] == Cout, "conv1d: bias size mismatch");
    check(k >= 1, "conv1d: empty kernel");

    auto out = make_tensor({B, Cout, L});
    const std::size_t pl = left_pad(k);
    const double* x = input->data.data();
    const double* w = weight->data.data();
    double* y = out->data.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Cout; ++o) {
            double* yr = y + (b * Cout + o) * L;
            std::fill(yr, yr + L, bias->data[o]);
            for (std::size_t c = 0; c < Cin; ++c) {
                const double* xr = x + (b * Cin + c) * L;
                const double* wr = w + (o * Cin + c) * k;
                for (std::size_t j = 0; j < k && j < L + pl; ++j) {
                    const double wj = wr[j];
                    if (wj == 0.0)
                        continue;
                    // y[t] += w[j] * x[t + j - pl] over the valid overlap
                    const std::size_t t0 = pl > j ? pl - j : 0;
                    const std::size_t t1 = std::min(L, L + pl - j);
                    for (std::size_t t = t0; t < t1; ++t)
                        yr[t] += wj * xr[t + j - pl];
                }
            }
        }

    return record(out, {input, weight, bias}, [=]() {
        input->ensure_grad();
        weight->ensure_grad();
        bias->ensure_grad();
        const double* gy = out->grad.data();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < Cout; ++o) {
                const double* gyr = gy + (b * Cout + o) * L;
                for (std::size_t t = 0; t < L; ++t)
                    bias->grad[o] += gyr[t];
                for (std::size_t c = 0; c < Cin; ++c) {
                    const double* xr = input->data.data() + (b * Cin + c) * L;
                    double* gxr = input->grad.data() + (b * Cin + c) * L;
                    const double* wr = weight->data.data() + (o * Cin + c) * k;
                    double* gwr = weight->grad.data() + (o * Cin + c) * k;
                    for (std::size_t j = 0; j < k && j < L + pl; ++j) {
                        const std::size_t t0 = pl > j ? pl - j : 0;
                        const std::size_t t1 = std::min(L, L + pl - j);
                        double gw = 0.0;
                        const double wj = wr[j];
                        for (std::size_t t = t0; t < t1; ++t) {
                            gw += gyr[t] * xr[t + j - pl];
                            gxr[t + j - pl] += gyr[t] * wj;
                        }
                        gwr[j] += gw;
                    }
                }
            }
    });
}

TensorPtr Graph::maxpool1d(const TensorPtr& input) {
    check(input->shape.size() == 3, "maxpool1d: input must be B x C x L");
    const std::size_t B = input->shape[0], C = input->shape[1], L = input->shape[2];
    check(L % 2 == 0, "maxpool1d: length must be even");
    const std::size_t Lo = L / 2;
    auto out = make_tensor({B, C, Lo});
    auto argmax = std::make_shared<std::vector<std::size_t>>(B * C * Lo);
    for (std::size_t r = 0; r < B * C; ++r) {
        const double* xr = input->data.data() + r * L;
        double* yr = out->data.data() + r * Lo;
        std::size_t* ar = argmax->data() + r * Lo;
        for (std::size_t t = 0; t < Lo; ++t) {
            // ties go to the left element
            const bool right_wins = xr[2 * t + 1] > xr[2 * t];
            ar[t] = 2 * t + (right_wins ? 1 : 0);
            yr[t] = xr[ar[t]];
        }
    }
    return record(out, {input}, [=]() {
        input->ensure_grad();
        for (std::size_t r = 0; r < B * C; ++r) {
            const double* gyr = out->grad.data() + r * Lo;
            const std::size_t* ar = argmax->data() + r * Lo;
            double* gxr = input->grad.data() + r * L;
            for (std::size_t t = 0; t < Lo; ++t)
                gxr[ar[t]] += gyr[t];
        }
    });
}

TensorPtr Graph::transposed_conv1d(const TensorPtr& input, const TensorPtr& weight,
                                   const TensorPtr& bias) {
    check(input->shape.size() == 3, "transposed_conv1d: input must be B x C x L");
    check(weight->shape.size() == 3, "transposed_conv1d: weight must be Cout x Cin x k");
    check(bias->shape.size() == 1, "transposed_conv1d: bias must be Cout");
    const std::size_t B = input->shape[0], Cin = input->shape[1], L = input->shape[2];
    const std::size_t Cout = weight->shape[0], k = weight->shape[2];
    check(weight->shape[1] == Cin, "transposed_conv1d: channel mismatch");
    check(bias->shape[0] == Cout, "transposed_conv1d: bias size mismatch");
    check(k == 2, "transposed_conv1d: kernel must be 2");

    const std::size_t Lo = 2 * L;
    auto out = make_tensor({B, Cout, Lo});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Cout; ++o) {
            double* yr = out->data.data() + (b * Cout + o) * Lo;
            std::fill(yr, yr + Lo, bias->data[o]);
            for (std::size_t c = 0; c < Cin; ++c) {
                const double* xr = input->data.data() + (b * Cin + c) * L;
                const double w0 = weight->data[(o * Cin + c) * k];
                const double w1 = weight->data[(o * Cin + c) * k + 1];
                for (std::size_t t = 0; t < L; ++t) {
                    yr[2 * t] += w0 * xr[t];
                    yr[2 * t + 1] += w1 * xr[t];
                }
            }
        }
    return record(out, {input, weight, bias}, [=]() {
        input->ensure_grad();
        weight->ensure_grad();
        bias->ensure_grad();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < Cout; ++o) {
                const double* gyr = out->grad.data() + (b * Cout + o) * Lo;
                for (std::size_t t = 0; t < Lo; ++t)
                    bias->grad[o] += gyr[t];
                for (std::size_t c = 0; c < Cin; ++c) {
                    const double* xr = input->data.data() + (b * Cin + c) * L;
                    double* gxr = input->grad.data() + (b * Cin + c) * L;
                    const double w0 = weight->data[(o * Cin + c) * k];
                    const double w1 = weight->data[(o * Cin + c) * k + 1];
                    double gw0 = 0.0, gw1 = 0.0;
                    for (std::size_t t = 0; t < L; ++t) {
                        gw0 += gyr[2 * t] * xr[t];
                        gw1 += gyr[2 * t + 1] * xr[t];
                        gxr[t] += gyr[2 * t] * w0 + gyr[2 * t + 1] * w1;
                    }
                    weight->grad[(o * Cin + c) * k] += gw0;
                    weight->grad[(o * Cin + c) * k + 1] += gw1;
                }
            }
    });
}

TensorPtr Graph::batchnorm1d(const TensorPtr& input, const TensorPtr& gamma, const TensorPtr& beta,
                             std::vector<double>& running_mean, std::vector<double>& running_var,
                             bool train, double momentum, double eps) {
    check(input->shape.size() == 3, "batchnorm1d: input must be B x C x L");
    const std::size_t B = input->shape[0], C = input->shape[1], L = input->shape[2];
    check(gamma->shape == std::vector<std::size_t>{C}, "batchnorm1d: gamma size mismatch");
    check(beta->shape == std::vector<std::size_t>{C}, "batchnorm1d: beta size mismatch");
    check(running_mean.size() == C && running_var.size() == C,
          "batchnorm1d: running stats size mismatch");
    const std::size_t N = B * L;
    if (train)
        check(N >= 2, "batchnorm1d: train mode needs at least 2 values per channel");

    auto out = make_tensor({B, C, L});
    auto mean = std::make_shared<std::vector<double>>(C);
    auto inv_std = std::make_shared<std::vector<double>>(C);
    for (std::size_t c = 0; c < C; ++c) {
        double m, v;
        if (train) {
            double s = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xr = input->data.data() + (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t)
                    s += xr[t];
            }
            m = s / static_cast<double>(N);
            double vs = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xr = input->data.data() + (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t)
                    vs += (xr[t] - m) * (xr[t] - m);
            }
            v = vs / static_cast<double>(N);
            // running variance keeps the unbiased estimate
            const double v_unbiased = N > 1 ? vs / static_cast<double>(N - 1) : v;
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * m;
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * v_unbiased;
        } else {
            m = running_mean[c];
            v = running_var[c];
        }
        (*mean)[c] = m;
        (*inv_std)[c] = 1.0 / std::sqrt(v + eps);
        const double g = gamma->data[c], bb = beta->data[c], is = (*inv_std)[c];
        for (std::size_t b = 0; b < B; ++b) {
            const double* xr = input->data.data() + (b * C + c) * L;
            double* yr = out->data.data() + (b * C + c) * L;
            for (std::size_t t = 0; t < L; ++t)
                yr[t] = g * (xr[t] - m) * is + bb;
        }
    }

    return record(out, {input, gamma, beta}, [=]() {
        input->ensure_grad();
        gamma->ensure_grad();
        beta->ensure_grad();
        for (std::size_t c = 0; c < C; ++c) {
            const double m = (*mean)[c], is = (*inv_std)[c], g = gamma->data[c];
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* xr = input->data.data() + (b * C + c) * L;
                const double* gyr = out->grad.data() + (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t) {
                    sum_gy += gyr[t];
                    sum_gy_xhat += gyr[t] * (xr[t] - m) * is;
                }
            }
            gamma->grad[c] += sum_gy_xhat;
            beta->grad[c] += sum_gy;
            if (train) {
                const double n = static_cast<double>(N);
                for (std::size_t b = 0; b < B; ++b) {
                    const double* xr = input->data.data() + (b * C + c) * L;
                    const double* gyr = out->grad.data() + (b * C + c) * L;
                    double* gxr = input->grad.data() + (b * C + c) * L;
                    for (std::size_t t = 0; t < L; ++t) {
                        const double xhat = (xr[t] - m) * is;
                        gxr[t] += g * is *
                                  (gyr[t] - sum_gy / n - xhat * sum_gy_xhat / n);
                    }
                }
            } else {
                for (std::size_t b = 0; b < B; ++b) {
                    const double* gyr = out->grad.data() + (b * C + c) * L;
                    double* gxr = input->grad.data() + (b * C + c) * L;
                    for (std::size_t t = 0; t < L; ++t)
                        gxr[t] += gyr[t] * g * is;
                }
            }
        }
    });
}

TensorPtr Graph::relu(const TensorPtr& input) {
    auto out = make_tensor(input->shape);
    for (std::size_t i = 0; i < input->size(); ++i)
        out->data[i] = input->data[i] > 0.0 ? input->data[i] : 0.0;
    return record(out, {input}, [=]() {
        input->ensure_grad();
        for (std::size_t i = 0; i < input->size(); ++i)
            if (input->data[i] > 0.0)
                input->grad[i] += out->grad[i];
    });
}

TensorPtr Graph::sigmoid(const TensorPtr& input) {
    auto out = make_tensor(input->shape);
    for (std::size_t i = 0; i < input->size(); ++i)
        out->data[i] = 1.0 / (1.0 + std::exp(-input->data[i]));
    return record(out, {input}, [=]() {
        input->ensure_grad();
        for (std::size_t i = 0; i < input->size(); ++i)
            input->grad[i] += out->grad[i] * out->data[i] * (1.0 - out->data[i]);
    });
}

TensorPtr Graph::concat_channels(const TensorPtr& a, const TensorPtr& b) {
    check(a->shape.size() == 3 && b->shape.size() == 3, "concat: inputs must be B x C x L");
    check(a->shape[0] == b->shape[0] && a->shape[2] == b->shape[2],
          "concat: batch/length mismatch");
    const std::size_t B = a->shape[0], Ca = a->shape[1], Cb = b->shape[1], L = a->shape[2];
    auto out = make_tensor({B, Ca + Cb, L});
    for (std::size_t bb = 0; bb < B; ++bb) {
        std::copy(a->data.begin() + bb * Ca * L, a->data.begin() + (bb + 1) * Ca * L,
                  out->data.begin() + bb * (Ca + Cb) * L);
        std::copy(b->data.begin() + bb * Cb * L, b->data.begin() + (bb + 1) * Cb * L,
                  out->data.begin() + bb * (Ca + Cb) * L + Ca * L);
    }
    return record(out, {a, b}, [=]() {
        a->ensure_grad();
        b->ensure_grad();
        for (std::size_t bb = 0; bb < B; ++bb) {
            for (std::size_t i = 0; i < Ca * L; ++i)
                a->grad[bb * Ca * L + i] += out->grad[bb * (Ca + Cb) * L + i];
            for (std::size_t i = 0; i < Cb * L; ++i)
                b->grad[bb * Cb * L + i] += out->grad[bb * (Ca + Cb) * L + Ca * L + i];
        }
    });
}

TensorPtr Graph::custom(std::vector<TensorPtr> inputs, TensorPtr out,
                        std::function<void()> backward) {
    return record(std::move(out), std::move(inputs), std::move(backward));
}

void Graph::backward(const TensorPtr& loss) {
    if (loss->size() != 1)
        throw ShapeMismatch("backward: loss must be scalar");
    if (nodes_.empty() || nodes_.back().out != loss)
        throw GraphCycle("backward: loss is not the last recorded node");
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->out->ensure_grad();
        it->backward();
    }
}

void Graph::clear() { nodes_.clear(); }

void adadelta_step(std::vector<double>& params, const std::vector<double>& grads,
                   AdaDeltaState& state) {
    if (params.size() != grads.size())
        throw ShapeMismatch("adadelta_step: param/grad size mismatch");
    if (state.sq_grad.size() != params.size())
        state.sq_grad.assign(params.size(), 0.0);
    if (state.sq_step.size() != params.size())
        state.sq_step.assign(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.sq_grad[i] = state.rho * state.sq_grad[i] + (1.0 - state.rho) * g * g;
        const double dx =
            -std::sqrt(state.sq_step[i] + state.eps) / std::sqrt(state.sq_grad[i] + state.eps) * g;
        state.sq_step[i] = state.rho * state.sq_step[i] + (1.0 - state.rho) * dx * dx;
        params[i] += state.lr * dx;
    }
}

} // namespace kb::ag
