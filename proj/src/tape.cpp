#include "fairpipe/tape.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "fairpipe/errors.hpp"

namespace fairpipe {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) {
    return ConstMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
    return MutMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

double stable_sigmoid(double x) {
    static const double kHi = std::nextafter(1.0, 0.0);
    constexpr double kLo = 2.2250738585072014e-308;
    double s;
    if (x >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        s = e / (1.0 + e);
    }
    if (s < kLo) s = kLo;
    if (s > kHi) s = kHi;
    return s;
}

constexpr double kProbClamp = 1e-12;

}  // namespace

NodeId Tape::push(Tensor value, std::function<void(Tape&, NodeId)> backprop) {
    Node n;
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
    return nodes_[static_cast<std::size_t>(id)];
}

void Tape::require_open(const char* op) const {
    if (consumed_) {
        throw StateError(std::string(op) + ": tape already consumed by backward");
    }
}

void Tape::check_id(NodeId id, const char* op) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
        throw StateError(std::string(op) + ": invalid node id " + std::to_string(id));
    }
}

NodeId Tape::input(Tensor value) {
    require_open("input");
    check_finite(value, "input");
    return push(std::move(value), nullptr);
}

NodeId Tape::param(ParamStore& store, const std::string& name) {
    require_open("param");
    const NodeId id = push(store.value(name), nullptr);
    nodes_.back().bound_store = &store;
    nodes_.back().bound_name = name;
    return id;
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
    require_open("affine");
    check_id(x, "affine");
    check_id(w, "affine");
    check_id(b, "affine");
    const Tensor& xv = node(x).value;
    const Tensor& wv = node(w).value;
    const Tensor& bv = node(b).value;
    if (wv.shape.size() != 2) throw ShapeError("affine: weight must be rank-2");
    if (xv.cols() != wv.rows()) {
        throw ShapeError("affine: input cols " + std::to_string(xv.cols()) +
                         " != weight rows " + std::to_string(wv.rows()));
    }
    if (bv.numel() != wv.cols()) {
        throw ShapeError("affine: bias length " + std::to_string(bv.numel()) +
                         " != weight cols " + std::to_string(wv.cols()));
    }
    check_finite(xv, "affine");
    check_finite(wv, "affine");
    check_finite(bv, "affine");

    Tensor out = xv.shape.size() == 2 ? Tensor::zeros({xv.rows(), wv.cols()})
                                      : Tensor::zeros({wv.cols()});
    {
        auto X = as_matrix(xv);
        auto W = as_matrix(wv);
        auto B = as_matrix(bv);
        auto Y = as_matrix(out);
        Y.noalias() = X * W;
        Y.rowwise() += B.row(0);
    }
    return push(std::move(out), [x, w, b](Tape& t, NodeId self) {
        const Tensor& g = t.node(self).grad;
        auto G = as_matrix(g);
        auto X = as_matrix(t.node(x).value);
        auto W = as_matrix(t.node(w).value);
        as_matrix(t.grad_ref(x)).noalias() += G * W.transpose();
        as_matrix(t.grad_ref(w)).noalias() += X.transpose() * G;
        as_matrix(t.grad_ref(b)).row(0) += G.colwise().sum();
    });
}

NodeId Tape::sigmoid(NodeId x) {
    require_open("sigmoid");
    check_id(x, "sigmoid");
    const Tensor& xv = node(x).value;
    check_finite(xv, "sigmoid");
    Tensor out = xv;
    for (double& v : out.data) v = stable_sigmoid(v);
    return push(std::move(out), [x](Tape& t, NodeId self) {
        const Tensor& s = t.node(self).value;
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_ref(x);
        for (std::size_t i = 0; i < s.numel(); ++i) {
            gx.data[i] += g.data[i] * s.data[i] * (1.0 - s.data[i]);
        }
    });
}

NodeId Tape::softmax(NodeId x) {
    require_open("softmax");
    check_id(x, "softmax");
    const Tensor& xv = node(x).value;
    check_finite(xv, "softmax");
    Tensor out = xv;
    const std::size_t rows = xv.rows();
    const std::size_t cols = xv.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = out.data.data() + r * cols;
        double mx = row[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
    }
    return push(std::move(out), [x](Tape& t, NodeId self) {
        const Tensor& s = t.node(self).value;
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_ref(x);
        const std::size_t rows = s.rows();
        const std::size_t cols = s.cols();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* srow = s.data.data() + r * cols;
            const double* grow = g.data.data() + r * cols;
            double dot = 0.0;
            for (std::size_t c = 0; c < cols; ++c) dot += grow[c] * srow[c];
            double* gxrow = gx.data.data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) {
                gxrow[c] += srow[c] * (grow[c] - dot);
            }
        }
    });
}

NodeId Tape::concat(NodeId a, NodeId b) {
    require_open("concat");
    check_id(a, "concat");
    check_id(b, "concat");
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    if (av.rows() != bv.rows()) {
        throw ShapeError("concat: row mismatch " + std::to_string(av.rows()) + " vs " +
                         std::to_string(bv.rows()));
    }
    check_finite(av, "concat");
    check_finite(bv, "concat");
    const std::size_t rows = av.rows();
    const std::size_t ca = av.cols();
    const std::size_t cb = bv.cols();
    const bool rank2 = av.shape.size() == 2 || bv.shape.size() == 2;
    Tensor out = rank2 ? Tensor::zeros({rows, ca + cb}) : Tensor::zeros({ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) out.data[r * (ca + cb) + c] = av.data[r * ca + c];
        for (std::size_t c = 0; c < cb; ++c) {
            out.data[r * (ca + cb) + ca + c] = bv.data[r * cb + c];
        }
    }
    return push(std::move(out), [a, b, ca, cb, rows](Tape& t, NodeId self) {
        const Tensor& g = t.node(self).grad;
        Tensor& ga = t.grad_ref(a);
        Tensor& gb = t.grad_ref(b);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < ca; ++c) {
                ga.data[r * ca + c] += g.data[r * (ca + cb) + c];
            }
            for (std::size_t c = 0; c < cb; ++c) {
                gb.data[r * cb + c] += g.data[r * (ca + cb) + ca + c];
            }
        }
    });
}

NodeId Tape::mean_rows(NodeId m, std::vector<std::uint8_t> row_mask) {
    require_open("mean_rows");
    check_id(m, "mean_rows");
    const Tensor& mv = node(m).value;
    if (row_mask.size() != mv.rows()) {
        throw ShapeError("mean_rows: mask length " + std::to_string(row_mask.size()) +
                         " != row count " + std::to_string(mv.rows()));
    }
    check_finite(mv, "mean_rows");
    std::size_t k = 0;
    for (const auto f : row_mask) k += f ? 1 : 0;
    if (k == 0) throw DataError("mean_rows: no unmasked rows");
    const std::size_t cols = mv.cols();
    Tensor out = Tensor::zeros({cols});
    for (std::size_t r = 0; r < mv.rows(); ++r) {
        if (!row_mask[r]) continue;
        for (std::size_t c = 0; c < cols; ++c) out.data[c] += mv.data[r * cols + c];
    }
    for (double& v : out.data) v /= static_cast<double>(k);
    return push(std::move(out),
                [m, mask = std::move(row_mask), k, cols](Tape& t, NodeId self) {
                    const Tensor& g = t.node(self).grad;
                    Tensor& gm = t.grad_ref(m);
                    const double inv = 1.0 / static_cast<double>(k);
                    for (std::size_t r = 0; r < mask.size(); ++r) {
                        if (!mask[r]) continue;
                        for (std::size_t c = 0; c < cols; ++c) {
                            gm.data[r * cols + c] += g.data[c] * inv;
                        }
                    }
                });
}

NodeId Tape::dropout(NodeId x, double rate, Rng& rng, bool train_flag) {
    require_open("dropout");
    check_id(x, "dropout");
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    // Identity when inactive; the rng is not consumed so parallel runs with
    // dropout disabled share stream positions with dropout-free training.
    if (!train_flag || rate == 0.0) return x;
    const Tensor& xv = node(x).value;
    check_finite(xv, "dropout");
    const double keep = 1.0 - rate;
    std::vector<double> scaled_mask(xv.numel());
    for (double& m : scaled_mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= scaled_mask[i];
    return push(std::move(out), [x, mask = std::move(scaled_mask)](Tape& t, NodeId self) {
        const Tensor& g = t.node(self).grad;
        Tensor& gx = t.grad_ref(x);
        for (std::size_t i = 0; i < mask.size(); ++i) gx.data[i] += g.data[i] * mask[i];
    });
}

NodeId Tape::rmse_loss(NodeId pred, NodeId target) {
    require_open("rmse_loss");
    check_id(pred, "rmse_loss");
    check_id(target, "rmse_loss");
    const Tensor& pv = node(pred).value;
    const Tensor& tv = node(target).value;
    check_same_shape(pv, tv, "rmse_loss");
    check_finite(pv, "rmse_loss");
    check_finite(tv, "rmse_loss");
    const std::size_t n = pv.numel();
    if (n == 0) throw ShapeError("rmse_loss: empty input");
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pv.data[i] - tv.data[i];
        sq += d * d;
    }
    const double rmse = std::sqrt(sq / static_cast<double>(n));
    return push(Tensor({1}, {rmse}), [pred, target, n, rmse](Tape& t, NodeId self) {
        const double g = t.node(self).grad.data[0];
        const Tensor& pv = t.node(pred).value;
        const Tensor& tv = t.node(target).value;
        Tensor& gp = t.grad_ref(pred);
        Tensor& gt = t.grad_ref(target);
        const double denom = static_cast<double>(n) * std::max(rmse, 1e-12);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = g * (pv.data[i] - tv.data[i]) / denom;
            gp.data[i] += d;
            gt.data[i] -= d;
        }
    });
}

NodeId Tape::cross_entropy(NodeId probs, std::vector<int> labels) {
    require_open("cross_entropy");
    check_id(probs, "cross_entropy");
    const Tensor& pv = node(probs).value;
    check_finite(pv, "cross_entropy");
    const std::size_t rows = pv.rows();
    const std::size_t cols = pv.cols();
    if (labels.size() != rows) {
        throw ShapeError("cross_entropy: label count " + std::to_string(labels.size()) +
                         " != row count " + std::to_string(rows));
    }
    for (std::size_t r = 0; r < rows; ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= cols) {
            throw IndexError("cross_entropy: label out of range at row " + std::to_string(r));
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double p = pv.data[r * cols + c];
            if (p < 0.0) throw NumericError("cross_entropy: negative probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw NumericError("cross_entropy: row " + std::to_string(r) +
                               " does not sum to 1");
        }
    }
    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        loss -= std::log(std::max(pv.data[r * cols + labels[r]], kProbClamp));
    }
    loss /= static_cast<double>(rows);
    return push(Tensor({1}, {loss}),
                [probs, lab = std::move(labels), rows, cols](Tape& t, NodeId self) {
                    const double g = t.node(self).grad.data[0];
                    const Tensor& pv = t.node(probs).value;
                    Tensor& gp = t.grad_ref(probs);
                    for (std::size_t r = 0; r < rows; ++r) {
                        const double p = pv.data[r * cols + lab[r]];
                        if (p < kProbClamp) continue;  // clamped term is constant
                        gp.data[r * cols + lab[r]] -= g / (static_cast<double>(rows) * p);
                    }
                });
}

NodeId Tape::neg_entropy(NodeId probs) {
    require_open("neg_entropy");
    check_id(probs, "neg_entropy");
    const Tensor& pv = node(probs).value;
    check_finite(pv, "neg_entropy");
    const std::size_t rows = pv.rows();
    const std::size_t cols = pv.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double p = pv.data[r * cols + c];
            if (p < 0.0) throw NumericError("neg_entropy: negative probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            throw NumericError("neg_entropy: row " + std::to_string(r) + " does not sum to 1");
        }
    }
    double total = 0.0;
    for (std::size_t i = 0; i < pv.numel(); ++i) {
        total += pv.data[i] * std::log(std::max(pv.data[i], kProbClamp));
    }
    total /= static_cast<double>(rows);
    return push(Tensor({1}, {total}), [probs, rows](Tape& t, NodeId self) {
        const double g = t.node(self).grad.data[0];
        const Tensor& pv = t.node(probs).value;
        Tensor& gp = t.grad_ref(probs);
        const double inv = 1.0 / static_cast<double>(rows);
        for (std::size_t i = 0; i < pv.numel(); ++i) {
            const double p = pv.data[i];
            const double d = p >= kProbClamp ? std::log(p) + 1.0 : std::log(kProbClamp);
            gp.data[i] += g * inv * d;
        }
    });
}

NodeId Tape::add(NodeId a, NodeId b) {
    require_open("add");
    check_id(a, "add");
    check_id(b, "add");
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_same_shape(av, bv, "add");
    check_finite(av, "add");
    check_finite(bv, "add");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
    return push(std::move(out), [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.node(self).grad;
        Tensor& ga = t.grad_ref(a);
        Tensor& gb = t.grad_ref(b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            ga.data[i] += g.data[i];
            gb.data[i] += g.data[i];
        }
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    require_open("mul");
    check_id(a, "mul");
    check_id(b, "mul");
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    check_same_shape(av, bv, "mul");
    check_finite(av, "mul");
    check_finite(bv, "mul");
    Tensor out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
    return push(std::move(out), [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.node(self).grad;
        const Tensor& av = t.node(a).value;
        const Tensor& bv = t.node(b).value;
        Tensor& ga = t.grad_ref(a);
        Tensor& gb = t.grad_ref(b);
        for (std::size_t i = 0; i < g.numel(); ++i) {
            ga.data[i] += g.data[i] * bv.data[i];
            gb.data[i] += g.data[i] * av.data[i];
        }
    });
}

NodeId Tape::scale(NodeId a, double factor) {
    require_open("scale");
    check_id(a, "scale");
    if (!std::isfinite(factor)) throw NumericError("scale: non-finite factor");
    const Tensor& av = node(a).value;
    check_finite(av, "scale");
    Tensor out = av;
    for (double& v : out.data) v *= factor;
    return push(std::move(out), [a, factor](Tape& t, NodeId self) {
        const Tensor& g = t.node(self).grad;
        Tensor& ga = t.grad_ref(a);
        for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += factor * g.data[i];
    });
}

void Tape::backward(NodeId loss) {
    if (consumed_) throw StateError("backward: tape already consumed");
    if (nodes_.empty()) throw StateError("backward: no forward pass recorded");
    check_id(loss, "backward");
    if (node(loss).value.numel() != 1) {
        throw StateError("backward: loss must be scalar, got shape " +
                         node(loss).value.shape_str());
    }
    for (auto& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
    nodes_[static_cast<std::size_t>(loss)].grad.data[0] = 1.0;
    for (NodeId i = loss; i >= 0; --i) {
        auto& n = nodes_[static_cast<std::size_t>(i)];
        if (n.backprop) n.backprop(*this, i);
    }
    for (auto& n : nodes_) {
        if (n.bound_store == nullptr) continue;
        Tensor& g = n.bound_store->grad(n.bound_name);
        for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += n.grad.data[i];
    }
    for (auto& n : nodes_) n.backprop = nullptr;
    consumed_ = true;
}

const Tensor& Tape::value(NodeId id) const {
    check_id(id, "value");
    return node(id).value;
}

const Tensor& Tape::grad(NodeId id) const {
    check_id(id, "grad");
    if (!consumed_) throw StateError("grad: backward has not run");
    return node(id).grad;
}

}  // namespace fairpipe
