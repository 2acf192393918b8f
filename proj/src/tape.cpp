// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "flair/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flair {

namespace {

void require_2d(const Tensor& t, const char* op) {
    if (t.shape.size() != 2)
        throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " + t.shape_str());
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() +
                                    " vs " + b.shape_str());
}

}  // namespace

Tape::Id Tape::push(Tensor value, bool needs_grad, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = needs_grad ? std::move(back) : std::function<void()>();
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(Id id) {
    Node& n = nodes_[id];
    if (!n.grad_ready) {
        n.grad = Tensor(n.value.shape, std::vector<double>(n.value.size(), 0.0));
        n.grad_ready = true;
    }
    return n.grad;
}

const Tensor& Tape::grad(Id id) const {
    const Node& n = nodes_[id];
    if (!n.grad_ready) throw std::logic_error("Tape::grad: gradient not populated; run backward first");
    return n.grad;
}

Tensor Tape::grad_or_zero(Id id) const {
    const Node& n = nodes_[id];
    if (n.grad_ready) return n.grad;
    return Tensor(n.value.shape, std::vector<double>(n.value.size(), 0.0));
}

Tape::Id Tape::leaf(Tensor value, bool requires_grad) {
    require_2d(value, "leaf");
    return push(std::move(value), requires_grad, {});
}

void Tape::backward(Id root) {
    if (nodes_[root].value.size() != 1)
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    nodes_[root].value.shape_str());
    grad_buf(root).data[0] = 1.0;
    for (Id i = root; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.needs_grad && n.grad_ready && n.back) n.back();
    }
}

// ---------------------------------------------------------------- matmul

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_2d(A, "matmul");
    require_2d(B, "matmul");
    if (A.cols() != B.rows())
        throw std::invalid_argument("matmul: inner dimensions do not match " + A.shape_str() +
                                    " vs " + B.shape_str());
    const int m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out = Tensor::zeros(m, n);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = A.at(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) out.at(i, j) += av * B.at(p, j);
        }
    const bool tg = track(a) || track(b);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, b, id, m, k, n] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& A2 = nodes_[a].value;
            const Tensor& B2 = nodes_[b].value;
            if (track(a)) {
                Tensor& ga = grad_buf(a);  // g . B^T
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) {
                        const double gv = g.at(i, j);
                        if (gv == 0.0) continue;
                        for (int p = 0; p < k; ++p) ga.at(i, p) += gv * B2.at(p, j);
                    }
            }
            if (track(b)) {
                Tensor& gb = grad_buf(b);  // A^T . g
                for (int i = 0; i < m; ++i)
                    for (int p = 0; p < k; ++p) {
                        const double av = A2.at(i, p);
                        if (av == 0.0) continue;
                        for (int j = 0; j < n; ++j) gb.at(p, j) += av * g.at(i, j);
                    }
            }
        };
    return id;
}

// ---------------------------------------------------------------- add/sub/mul

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_same(A, B, "add");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    const bool tg = track(a) || track(b);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, b, id] {
            const Tensor& g = nodes_[id].grad;
            if (track(a)) {
                Tensor& ga = grad_buf(a);
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (track(b)) {
                Tensor& gb = grad_buf(b);
                for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
            }
        };
    return id;
}

Tape::Id Tape::sub(Id a, Id b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_same(A, B, "sub");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
    const bool tg = track(a) || track(b);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, b, id] {
            const Tensor& g = nodes_[id].grad;
            if (track(a)) {
                Tensor& ga = grad_buf(a);
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (track(b)) {
                Tensor& gb = grad_buf(b);
                for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
            }
        };
    return id;
}

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_same(A, B, "mul");
    Tensor out = A;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    const bool tg = track(a) || track(b);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, b, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& A2 = nodes_[a].value;
            const Tensor& B2 = nodes_[b].value;
            if (track(a)) {
                Tensor& ga = grad_buf(a);
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * B2.data[i];
            }
            if (track(b)) {
                Tensor& gb = grad_buf(b);
                for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * A2.data[i];
            }
        };
    return id;
}

// ---------------------------------------------------------------- row broadcasts

Tape::Id Tape::add_row(Id a, Id r) {
    const Tensor& A = nodes_[a].value;
    const Tensor& R = nodes_[r].value;
    if (R.rows() != 1 || R.cols() != A.cols())
        throw std::invalid_argument("add_row: row shape " + R.shape_str() +
                                    " incompatible with " + A.shape_str());
    Tensor out = A;
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) out.at(i, j) += R.at(0, j);
    const bool tg = track(a) || track(r);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, r, id] {
            const Tensor& g = nodes_[id].grad;
            if (track(a)) {
                Tensor& ga = grad_buf(a);
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (track(r)) {
                Tensor& gr = grad_buf(r);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gr.at(0, j) += g.at(i, j);
            }
        };
    return id;
}

Tape::Id Tape::sub_row(Id a, Id r) {
    const Tensor& A = nodes_[a].value;
    const Tensor& R = nodes_[r].value;
    if (R.rows() != 1 || R.cols() != A.cols())
        throw std::invalid_argument("sub_row: row shape " + R.shape_str() +
                                    " incompatible with " + A.shape_str());
    Tensor out = A;
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) out.at(i, j) -= R.at(0, j);
    const bool tg = track(a) || track(r);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, r, id] {
            const Tensor& g = nodes_[id].grad;
            if (track(a)) {
                Tensor& ga = grad_buf(a);
                for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
            }
            if (track(r)) {
                Tensor& gr = grad_buf(r);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gr.at(0, j) -= g.at(i, j);
            }
        };
    return id;
}

Tape::Id Tape::mul_row(Id a, Id r) {
    const Tensor& A = nodes_[a].value;
    const Tensor& R = nodes_[r].value;
    if (R.rows() != 1 || R.cols() != A.cols())
        throw std::invalid_argument("mul_row: row shape " + R.shape_str() +
                                    " incompatible with " + A.shape_str());
    Tensor out = A;
    for (int i = 0; i < A.rows(); ++i)
        for (int j = 0; j < A.cols(); ++j) out.at(i, j) *= R.at(0, j);
    const bool tg = track(a) || track(r);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, r, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& A2 = nodes_[a].value;
            const Tensor& R2 = nodes_[r].value;
            if (track(a)) {
                Tensor& ga = grad_buf(a);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) ga.at(i, j) += g.at(i, j) * R2.at(0, j);
            }
            if (track(r)) {
                Tensor& gr = grad_buf(r);
                for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < g.cols(); ++j) gr.at(0, j) += g.at(i, j) * A2.at(i, j);
            }
        };
    return id;
}

Tape::Id Tape::scale(Id a, double s) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v *= s;
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id, s] {
            const Tensor& g = nodes_[id].grad;
            Tensor& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += s * g.data[i];
        };
    return id;
}

Tape::Id Tape::add_const(Id a, double v) {
    Tensor out = nodes_[a].value;
    for (double& x : out.data) x += v;
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            Tensor& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
        };
    return id;
}

// ---------------------------------------------------------------- elementwise

Tape::Id Tape::relu(Id a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& x = nodes_[a].value;
            Tensor& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                if (x.data[i] > 0.0) ga.data[i] += g.data[i];
        };
    return id;
}

Tape::Id Tape::tanh_op(Id a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::tanh(v);
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& y = nodes_[id].value;
            Tensor& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
        };
    return id;
}

Tape::Id Tape::log_op(Id a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::log(v);
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& x = nodes_[a].value;
            Tensor& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] / x.data[i];
        };
    return id;
}

Tape::Id Tape::exp_op(Id a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::exp(v);
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& y = nodes_[id].value;
            Tensor& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
        };
    return id;
}

Tape::Id Tape::square(Id a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = v * v;
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& x = nodes_[a].value;
            Tensor& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                ga.data[i] += 2.0 * x.data[i] * g.data[i];
        };
    return id;
}

Tape::Id Tape::abs_op(Id a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::fabs(v);
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& x = nodes_[a].value;
            Tensor& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                const double s = x.data[i] > 0.0 ? 1.0 : (x.data[i] < 0.0 ? -1.0 : 0.0);
                ga.data[i] += s * g.data[i];
            }
        };
    return id;
}

Tape::Id Tape::sqrt_op(Id a) {
    Tensor out = nodes_[a].value;
    for (double& v : out.data) v = std::sqrt(v);
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& y = nodes_[id].value;
            Tensor& ga = grad_buf(a);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                if (y.data[i] > 0.0) ga.data[i] += g.data[i] / (2.0 * y.data[i]);
        };
    return id;
}

// ---------------------------------------------------------------- reductions

Tape::Id Tape::sum(Id a) {
    double s = 0.0;
    for (double v : nodes_[a].value.data) s += v;
    const bool tg = track(a);
    Id id = push(Tensor::scalar(s), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const double g = nodes_[id].grad.data[0];
            Tensor& ga = grad_buf(a);
            for (double& v : ga.data) v += g;
        };
    return id;
}

Tape::Id Tape::mean(Id a) {
    const std::size_t n = nodes_[a].value.size();
    double s = 0.0;
    for (double v : nodes_[a].value.data) s += v;
    const bool tg = track(a);
    Id id = push(Tensor::scalar(s / static_cast<double>(n)), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id, n] {
            const double g = nodes_[id].grad.data[0] / static_cast<double>(n);
            Tensor& ga = grad_buf(a);
            for (double& v : ga.data) v += g;
        };
    return id;
}

Tape::Id Tape::row_sum(Id a) {
    const Tensor& A = nodes_[a].value;
    Tensor out = Tensor::zeros(A.rows(), 1);
    for (int i = 0; i < A.rows(); ++i) {
        double s = 0.0;
        for (int j = 0; j < A.cols(); ++j) s += A.at(i, j);
        out.at(i, 0) = s;
    }
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& A2 = nodes_[a].value;
            Tensor& ga = grad_buf(a);
            for (int i = 0; i < A2.rows(); ++i)
                for (int j = 0; j < A2.cols(); ++j) ga.at(i, j) += g.at(i, 0);
        };
    return id;
}

Tape::Id Tape::col_mean(Id a) {
    const Tensor& A = nodes_[a].value;
    const int m = A.rows();
    Tensor out = Tensor::zeros(1, A.cols());
    for (int j = 0; j < A.cols(); ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += A.at(i, j);
        out.at(0, j) = s / m;
    }
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id, m] {
            const Tensor& g = nodes_[id].grad;
            Tensor& ga = grad_buf(a);
            for (int i = 0; i < ga.rows(); ++i)
                for (int j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(0, j) / m;
        };
    return id;
}

Tape::Id Tape::hstack(std::span<const Id> parts) {
    if (parts.empty()) throw std::invalid_argument("hstack: no inputs");
    const int m = nodes_[parts[0]].value.rows();
    int total = 0;
    bool tg = false;
    for (Id p : parts) {
        const Tensor& t = nodes_[p].value;
        if (t.rows() != m)
            throw std::invalid_argument("hstack: row count mismatch " + t.shape_str());
        total += t.cols();
        tg = tg || track(p);
    }
    Tensor out = Tensor::zeros(m, total);
    int off = 0;
    for (Id p : parts) {
        const Tensor& t = nodes_[p].value;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < t.cols(); ++j) out.at(i, off + j) = t.at(i, j);
        off += t.cols();
    }
    std::vector<Id> owned(parts.begin(), parts.end());
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, owned, id] {
            const Tensor& g = nodes_[id].grad;
            int off2 = 0;
            for (Id p : owned) {
                const int c = nodes_[p].value.cols();
                if (track(p)) {
                    Tensor& gp = grad_buf(p);
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < c; ++j) gp.at(i, j) += g.at(i, off2 + j);
                }
                off2 += c;
            }
        };
    return id;
}

Tape::Id Tape::standardize_rows(Id a) {
    // RMS normalization per row: fixes the row scale without subtracting
    // the mean, so no affine aliasing channel opens up
    constexpr double kEps = 1e-8;
    const Tensor& A = nodes_[a].value;
    const int m = A.rows(), n = A.cols();
    Tensor out = A;
    std::vector<double> inv_rms(m);
    for (int i = 0; i < m; ++i) {
        double ms = 0.0;
        for (int j = 0; j < n; ++j) ms += A.at(i, j) * A.at(i, j);
        ms /= n;
        inv_rms[i] = 1.0 / std::sqrt(ms + kEps);
        for (int j = 0; j < n; ++j) out.at(i, j) = A.at(i, j) * inv_rms[i];
    }
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id, inv_rms, m, n] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& y = nodes_[id].value;
            Tensor& ga = grad_buf(a);
            for (int i = 0; i < m; ++i) {
                double gydot = 0.0;
                for (int j = 0; j < n; ++j) gydot += g.at(i, j) * y.at(i, j);
                gydot /= n;
                for (int j = 0; j < n; ++j)
                    ga.at(i, j) += inv_rms[i] * (g.at(i, j) - y.at(i, j) * gydot);
            }
        };
    return id;
}

// ---------------------------------------------------------------- softmax family

Tape::Id Tape::softmax_rows(Id a) {
    const Tensor& A = nodes_[a].value;
    Tensor out = A;
    for (int i = 0; i < A.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < A.cols(); ++j) mx = std::max(mx, A.at(i, j));
        double z = 0.0;
        for (int j = 0; j < A.cols(); ++j) {
            out.at(i, j) = std::exp(A.at(i, j) - mx);
            z += out.at(i, j);
        }
        for (int j = 0; j < A.cols(); ++j) out.at(i, j) /= z;
    }
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& s = nodes_[id].value;
            Tensor& ga = grad_buf(a);
            for (int i = 0; i < s.rows(); ++i) {
                double dot = 0.0;
                for (int j = 0; j < s.cols(); ++j) dot += g.at(i, j) * s.at(i, j);
                for (int j = 0; j < s.cols(); ++j)
                    ga.at(i, j) += s.at(i, j) * (g.at(i, j) - dot);
            }
        };
    return id;
}

Tape::Id Tape::logsumexp_rows(Id a) {
    const Tensor& A = nodes_[a].value;
    Tensor out = Tensor::zeros(A.rows(), 1);
    for (int i = 0; i < A.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < A.cols(); ++j) mx = std::max(mx, A.at(i, j));
        double z = 0.0;
        for (int j = 0; j < A.cols(); ++j) z += std::exp(A.at(i, j) - mx);
        out.at(i, 0) = mx + std::log(z);
    }
    const bool tg = track(a);
    Id id = push(std::move(out), tg, {});
    if (tg)
        nodes_[id].back = [this, a, id] {
            const Tensor& g = nodes_[id].grad;
            const Tensor& A2 = nodes_[a].value;
            const Tensor& lse = nodes_[id].value;
            Tensor& ga = grad_buf(a);
            for (int i = 0; i < A2.rows(); ++i)
                for (int j = 0; j < A2.cols(); ++j)
                    ga.at(i, j) += g.at(i, 0) * std::exp(A2.at(i, j) - lse.at(i, 0));
        };
    return id;
}

Tape::Id Tape::cross_entropy_logits(Id logits, std::vector<int> labels) {
    const Tensor& L = nodes_[logits].value;
    if (static_cast<int>(labels.size()) != L.rows())
        throw std::invalid_argument("cross_entropy_logits: " + std::to_string(labels.size()) +
                                    " labels for " + L.shape_str() + " logits");
    for (int y : labels)
        if (y < 0 || y >= L.cols())
            throw std::invalid_argument("cross_entropy_logits: label " + std::to_string(y) +
                                        " out of range for " + std::to_string(L.cols()) + " classes");
    const int m = L.rows();
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < L.cols(); ++j) mx = std::max(mx, L.at(i, j));
        double z = 0.0;
        for (int j = 0; j < L.cols(); ++j) z += std::exp(L.at(i, j) - mx);
        total += mx + std::log(z) - L.at(i, labels[i]);
    }
    const bool tg = track(logits);
    Id id = push(Tensor::scalar(total / m), tg, {});
    if (tg)
        nodes_[id].back = [this, logits, id, labels, m] {
            const double g = nodes_[id].grad.data[0] / m;
            const Tensor& L2 = nodes_[logits].value;
            Tensor& gl = grad_buf(logits);
            for (int i = 0; i < m; ++i) {
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < L2.cols(); ++j) mx = std::max(mx, L2.at(i, j));
                double z = 0.0;
                for (int j = 0; j < L2.cols(); ++j) z += std::exp(L2.at(i, j) - mx);
                for (int j = 0; j < L2.cols(); ++j) {
                    const double p = std::exp(L2.at(i, j) - mx) / z;
                    gl.at(i, j) += g * (p - (j == labels[i] ? 1.0 : 0.0));
                }
            }
        };
    return id;
}

// ---------------------------------------------------------------- distances

Tape::Id Tape::l1_distance(Id a, Id b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_same(A, B, "l1_distance");
    double s = 0.0;
    for (std::size_t i = 0; i < A.data.size(); ++i) s += std::fabs(A.data[i] - B.data[i]);
    const bool tg = track(a) || track(b);
    Id id = push(Tensor::scalar(s), tg, {});
    if (tg)
        nodes_[id].back = [this, a, b, id] {
            const double g = nodes_[id].grad.data[0];
            const Tensor& A2 = nodes_[a].value;
            const Tensor& B2 = nodes_[b].value;
            for (std::size_t i = 0; i < A2.data.size(); ++i) {
                const double d = A2.data[i] - B2.data[i];
                const double s2 = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                if (track(a)) grad_buf(a).data[i] += g * s2;
                if (track(b)) grad_buf(b).data[i] -= g * s2;
            }
        };
    return id;
}

Tape::Id Tape::sqeuclid_distance(Id a, Id b) {
    const Tensor& A = nodes_[a].value;
    const Tensor& B = nodes_[b].value;
    require_same(A, B, "sqeuclid_distance");
    double s = 0.0;
    for (std::size_t i = 0; i < A.data.size(); ++i) {
        const double d = A.data[i] - B.data[i];
        s += d * d;
    }
    const bool tg = track(a) || track(b);
    Id id = push(Tensor::scalar(s), tg, {});
    if (tg)
        nodes_[id].back = [this, a, b, id] {
            const double g = nodes_[id].grad.data[0];
            const Tensor& A2 = nodes_[a].value;
            const Tensor& B2 = nodes_[b].value;
            for (std::size_t i = 0; i < A2.data.size(); ++i) {
                const double d = 2.0 * (A2.data[i] - B2.data[i]);
                if (track(a)) grad_buf(a).data[i] += g * d;
                if (track(b)) grad_buf(b).data[i] -= g * d;
            }
        };
    return id;
}

}  // namespace flair
