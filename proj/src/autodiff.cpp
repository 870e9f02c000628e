#include "qdavpr/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qdavpr::ad {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

template <typename S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
}

template <typename S>
bool any_requires(Tape<S>& t, std::initializer_list<Var<S>> vs) {
    if (!t.grad_enabled()) return false;
    for (const auto& v : vs)
        if (v.valid() && t.requires_grad(v)) return true;
    return false;
}

}  // namespace

// ---- Tape ---------------------------------------------------------------------

template <typename S>
Var<S> Tape<S>::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename S>
Var<S> Tape<S>::parameter(Parameter<S>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Node n;
    n.value = p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_ && p.trainable;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_nodes_.emplace(&p, id);
    return {this, id};
}

template <typename S>
Var<S> Tape<S>::record(Matrix value, std::span<const Var<S>> inputs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    if (grad_enabled_) {
        for (const auto& v : inputs)
            if (v.valid() && nodes_[v.id].requires_grad) n.requires_grad = true;
    }
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
}

template <typename S>
Var<S> Tape<S>::record(Matrix value, std::initializer_list<Var<S>> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var<S>>(inputs.begin(), inputs.size()),
                  std::move(fn));
}

template <typename S>
typename Tape<S>::Matrix Tape<S>::grad(Var<S> v) const {
    const Node& n = nodes_[v.id];
    if (n.has_grad) return n.grad;
    return Matrix::Zero(n.value.rows(), n.value.cols());
}

template <typename S>
void Tape<S>::backward(Var<S> root, S seed) {
    if (root.value().size() != 1) throw ShapeError("backward: root must be a 1x1 scalar");
    Node& r = nodes_[root.id];
    if (!r.requires_grad) return;
    r.grad = Matrix::Constant(1, 1, seed);
    r.has_grad = true;
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.has_grad) continue;
        if (n.backward) n.backward(*this, n.grad);
        if (n.param != nullptr) n.param->grad += n.grad;
    }
}

// ---- elementwise / structural ------------------------------------------------

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
    require_same_shape(a, b, "add");
    return a.tape->record(a.value() + b.value(), {a, b}, [a, b](Tape<S>& t, const Mat<S>& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
    require_same_shape(a, b, "sub");
    return a.tape->record(a.value() - b.value(), {a, b}, [a, b](Tape<S>& t, const Mat<S>& g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

template <typename S>
Var<S> scale(Var<S> a, S factor) {
    return a.tape->record(a.value() * factor, {a}, [a, factor](Tape<S>& t, const Mat<S>& g) {
        t.accumulate(a, g * factor);
    });
}

template <typename S>
Var<S> add_row(Var<S> a, Var<S> bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols())
        throw ShapeError("add_row: bias must be 1x" + std::to_string(a.cols()));
    Mat<S> out = a.value().rowwise() + bias.value().row(0);
    return a.tape->record(std::move(out), {a, bias}, [a, bias](Tape<S>& t, const Mat<S>& g) {
        t.accumulate(a, g);
        t.accumulate(bias, g.colwise().sum());
    });
}

template <typename S>
Var<S> relu(Var<S> a) {
    return a.tape->record(a.value().cwiseMax(S(0)), {a}, [a](Tape<S>& t, const Mat<S>& g) {
        const Mat<S>& x = t.value(a.id);
        t.accumulate(a, (x.array() > S(0)).select(g, S(0)).matrix());
    });
}

template <typename S>
Var<S> reshape(Var<S> a, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != a.value().size())
        throw ShapeError("reshape: cannot view " + shape_str(a.rows(), a.cols()) + " as " +
                         shape_str(rows, cols));
    const Eigen::Index r0 = a.rows(), c0 = a.cols();
    Mat<S> out = Eigen::Map<const Mat<S>>(a.value().data(), rows, cols);
    return a.tape->record(std::move(out), {a}, [a, r0, c0](Tape<S>& t, const Mat<S>& g) {
        t.accumulate(a, Eigen::Map<const Mat<S>>(g.data(), r0, c0));
    });
}

template <typename S>
Var<S> slice_cols(Var<S> a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
    return a.tape->record(a.value().middleCols(start, count), {a},
                          [a, start, count](Tape<S>& t, const Mat<S>& g) {
                              Mat<S> full = Mat<S>::Zero(t.value(a.id).rows(), t.value(a.id).cols());
                              full.middleCols(start, count) = g;
                              t.accumulate(a, full);
                          });
}

template <typename S>
Var<S> slice_rows(Var<S> a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
    return a.tape->record(a.value().middleRows(start, count), {a},
                          [a, start, count](Tape<S>& t, const Mat<S>& g) {
                              Mat<S> full = Mat<S>::Zero(t.value(a.id).rows(), t.value(a.id).cols());
                              full.middleRows(start, count) = g;
                              t.accumulate(a, full);
                          });
}

template <typename S>
Var<S> concat_cols(std::span<const Var<S>> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
        cols += p.cols();
    }
    Mat<S> out(rows, cols);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    std::vector<Var<S>> inputs(parts.begin(), parts.end());
    return parts[0].tape->record(std::move(out), parts, [inputs](Tape<S>& t, const Mat<S>& g) {
        Eigen::Index c = 0;
        for (const auto& p : inputs) {
            const Eigen::Index w = t.value(p.id).cols();
            t.accumulate(p, g.middleCols(c, w));
            c += w;
        }
    });
}

template <typename S>
Var<S> concat_rows(std::span<const Var<S>> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const Eigen::Index cols = parts[0].cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
        rows += p.rows();
    }
    Mat<S> out(rows, cols);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    std::vector<Var<S>> inputs(parts.begin(), parts.end());
    return parts[0].tape->record(std::move(out), parts, [inputs](Tape<S>& t, const Mat<S>& g) {
        Eigen::Index r = 0;
        for (const auto& p : inputs) {
            const Eigen::Index h = t.value(p.id).rows();
            t.accumulate(p, g.middleRows(r, h));
            r += h;
        }
    });
}

template <typename S>
Var<S> mean_rows(Var<S> a) {
    const S inv = S(1) / static_cast<S>(a.rows());
    Mat<S> out = a.value().colwise().sum() * inv;
    return a.tape->record(std::move(out), {a}, [a, inv](Tape<S>& t, const Mat<S>& g) {
        const Eigen::Index n = t.value(a.id).rows();
        t.accumulate(a, g.replicate(n, 1) * inv);
    });
}

template <typename S>
Var<S> sum_all(std::span<const Var<S>> scalars) {
    if (scalars.empty()) throw ShapeError("sum_all: no inputs");
    S total = 0;
    for (const auto& s : scalars) {
        if (s.value().size() != 1) throw ShapeError("sum_all: inputs must be 1x1");
        total += s.value()(0, 0);
    }
    std::vector<Var<S>> inputs(scalars.begin(), scalars.end());
    return scalars[0].tape->record(Mat<S>::Constant(1, 1, total), scalars,
                                   [inputs](Tape<S>& t, const Mat<S>& g) {
                                       for (const auto& s : inputs) t.accumulate(s, g);
                                   });
}

// ---- linear algebra ----------------------------------------------------------

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + shape_str(a.rows(), a.cols()) + " * " + shape_str(b.rows(), b.cols()));
    Mat<S> out = a.value() * b.value();
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape<S>& t, const Mat<S>& g) {
        if (t.requires_grad(a)) t.accumulate(a, g * t.value(b.id).transpose());
        if (t.requires_grad(b)) t.accumulate(b, t.value(a.id).transpose() * g);
    });
}

template <typename S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: " + shape_str(a.rows(), a.cols()) + " * (" +
                         shape_str(b.rows(), b.cols()) + ")^T");
    Mat<S> out = a.value() * b.value().transpose();
    return a.tape->record(std::move(out), {a, b}, [a, b](Tape<S>& t, const Mat<S>& g) {
        if (t.requires_grad(a)) t.accumulate(a, g * t.value(b.id));
        if (t.requires_grad(b)) t.accumulate(b, g.transpose() * t.value(a.id));
    });
}

template <typename S>
Var<S> linear(Var<S> x, Var<S> weight, Var<S> bias) {
    if (x.cols() != weight.cols())
        throw ShapeError("linear: input width " + std::to_string(x.cols()) + " vs weight " +
                         shape_str(weight.rows(), weight.cols()));
    Mat<S> out = x.value() * weight.value().transpose();
    if (bias.valid()) {
        if (bias.rows() != 1 || bias.cols() != weight.rows()) throw ShapeError("linear: bad bias shape");
        out.rowwise() += bias.value().row(0);
    }
    return x.tape->record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape<S>& t, const Mat<S>& g) {
        if (t.requires_grad(x)) t.accumulate(x, g * t.value(weight.id));
        if (t.requires_grad(weight)) t.accumulate(weight, g.transpose() * t.value(x.id));
        if (bias.valid() && t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
    });
}

// ---- normalisation -----------------------------------------------------------

template <typename S>
Var<S> softmax_rows(Var<S> a) {
    Mat<S> out = a.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const S m = out.row(r).maxCoeff();
        out.row(r) = (out.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    const int self = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), {a}, [a, self](Tape<S>& t, const Mat<S>& g) {
        const Mat<S>& y = t.value(self);
        Vec<S> dots = g.cwiseProduct(y).rowwise().sum();
        Mat<S> gx = y.cwiseProduct(g.colwise() - dots);
        t.accumulate(a, gx);
    });
}

template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gamma, Var<S> beta, S eps) {
    const Eigen::Index n = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n)
        throw ShapeError("layer_norm: gamma/beta must be 1x" + std::to_string(n));
    const Mat<S>& xv = x.value();
    Mat<S> xhat(xv.rows(), n);
    Vec<S> inv_std(xv.rows());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
        const S mu = xv.row(r).mean();
        const S var = (xv.row(r).array() - mu).square().mean();
        inv_std(r) = S(1) / std::sqrt(var + eps);
        xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
    }
    Mat<S> out = xhat.array().rowwise() * gamma.value().row(0).array();
    out.rowwise() += beta.value().row(0);
    auto fn = [x, gamma, beta, xhat, inv_std](Tape<S>& t, const Mat<S>& g) {
        if (t.requires_grad(gamma)) t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(beta)) t.accumulate(beta, g.colwise().sum());
        if (!t.requires_grad(x)) return;
        Mat<S> gh = g.array().rowwise() * t.value(gamma.id).row(0).array();
        const S inv_n = S(1) / static_cast<S>(gh.cols());
        Vec<S> mean_g = gh.rowwise().sum() * inv_n;
        Vec<S> mean_gx = gh.cwiseProduct(xhat).rowwise().sum() * inv_n;
        Mat<S> gx = gh;
        gx.colwise() -= mean_g;
        gx -= (xhat.array().colwise() * mean_gx.array()).matrix();
        gx = gx.array().colwise() * inv_std.array();
        t.accumulate(x, gx);
    };
    if (!any_requires(*x.tape, {x, gamma, beta})) return x.tape->constant(std::move(out));
    return x.tape->record(std::move(out), {x, gamma, beta}, std::move(fn));
}

template <typename S>
Var<S> normalize_rows(Var<S> a, S eps) {
    const Mat<S>& x = a.value();
    Vec<S> norms = x.rowwise().norm().cwiseMax(eps);
    Mat<S> out = x.array().colwise() / norms.array();
    const int self = static_cast<int>(a.tape->size());
    return a.tape->record(std::move(out), {a}, [a, self, norms, eps](Tape<S>& t, const Mat<S>& g) {
        const Mat<S>& y = t.value(self);
        Mat<S> gx(g.rows(), g.cols());
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
            if (norms(r) > eps)
                gx.row(r) = (g.row(r) - y.row(r) * y.row(r).dot(g.row(r))) / norms(r);
            else
                gx.row(r) = g.row(r) / eps;
        }
        t.accumulate(a, gx);
    });
}

template <typename S>
Var<S> normalize_all(Var<S> a, S eps) {
    const S raw = a.value().norm();
    const S norm = std::max(raw, eps);
    const int self = static_cast<int>(a.tape->size());
    return a.tape->record(a.value() / norm, {a}, [a, self, norm, raw, eps](Tape<S>& t, const Mat<S>& g) {
        if (raw > eps) {
            const Mat<S>& y = t.value(self);
            const S dot = y.cwiseProduct(g).sum();
            t.accumulate(a, (g - y * dot) / norm);
        } else {
            t.accumulate(a, g / eps);
        }
    });
}

// ---- spatial -----------------------------------------------------------------

namespace {

template <typename S>
Mat<S> im2col3x3(const Mat<S>& x, Grid grid) {
    const Eigen::Index c = x.cols();
    Mat<S> cols = Mat<S>::Zero(grid.size(), 9 * c);
    for (int y = 0; y < grid.height; ++y) {
        for (int xx = 0; xx < grid.width; ++xx) {
            const int row = y * grid.width + xx;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = y + ky - 1;
                if (sy < 0 || sy >= grid.height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = xx + kx - 1;
                    if (sx < 0 || sx >= grid.width) continue;
                    cols.row(row).segment((ky * 3 + kx) * c, c) = x.row(sy * grid.width + sx);
                }
            }
        }
    }
    return cols;
}

template <typename S>
Mat<S> col2im3x3(const Mat<S>& cols, Grid grid, Eigen::Index c) {
    Mat<S> x = Mat<S>::Zero(grid.size(), c);
    for (int y = 0; y < grid.height; ++y) {
        for (int xx = 0; xx < grid.width; ++xx) {
            const int row = y * grid.width + xx;
            for (int ky = 0; ky < 3; ++ky) {
                const int sy = y + ky - 1;
                if (sy < 0 || sy >= grid.height) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const int sx = xx + kx - 1;
                    if (sx < 0 || sx >= grid.width) continue;
                    x.row(sy * grid.width + sx) += cols.row(row).segment((ky * 3 + kx) * c, c);
                }
            }
        }
    }
    return x;
}

}  // namespace

template <typename S>
Var<S> conv3x3(Var<S> x, Grid grid, Var<S> weight, Var<S> bias) {
    if (x.rows() != grid.size())
        throw ShapeError("conv3x3: " + std::to_string(x.rows()) + " tokens for a " +
                         std::to_string(grid.height) + "x" + std::to_string(grid.width) + " grid");
    const Eigen::Index cin = x.cols();
    if (weight.cols() != 9 * cin) throw ShapeError("conv3x3: weight expects " +
                                                    std::to_string(weight.cols() / 9) + " input channels, got " +
                                                    std::to_string(cin));
    Mat<S> cols = im2col3x3(x.value(), grid);
    Mat<S> out = cols * weight.value().transpose();
    if (bias.valid()) out.rowwise() += bias.value().row(0);
    if (!any_requires(*x.tape, {x, weight, bias})) return x.tape->constant(std::move(out));
    return x.tape->record(std::move(out), {x, weight, bias},
                          [x, grid, weight, bias, cols = std::move(cols), cin](Tape<S>& t, const Mat<S>& g) {
                              if (t.requires_grad(weight)) t.accumulate(weight, g.transpose() * cols);
                              if (bias.valid() && t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
                              if (t.requires_grad(x)) t.accumulate(x, col2im3x3<S>(g * t.value(weight.id), grid, cin));
                          });
}

template <typename S>
Var<S> avg_pool2x2(Var<S> x, Grid grid) {
    if (x.rows() != grid.size()) throw ShapeError("avg_pool2x2: token count does not match grid");
    const Grid out_grid = pooled_grid(grid);
    if (out_grid.size() == 0) throw ShapeError("avg_pool2x2: grid smaller than 2x2");
    const Mat<S>& xv = x.value();
    Mat<S> out = Mat<S>::Zero(out_grid.size(), xv.cols());
    for (int oy = 0; oy < out_grid.height; ++oy)
        for (int ox = 0; ox < out_grid.width; ++ox)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    out.row(oy * out_grid.width + ox) += xv.row((2 * oy + dy) * grid.width + 2 * ox + dx);
    out *= S(0.25);
    return x.tape->record(std::move(out), {x}, [x, grid, out_grid](Tape<S>& t, const Mat<S>& g) {
        Mat<S> gx = Mat<S>::Zero(grid.size(), g.cols());
        for (int oy = 0; oy < out_grid.height; ++oy)
            for (int ox = 0; ox < out_grid.width; ++ox)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        gx.row((2 * oy + dy) * grid.width + 2 * ox + dx) = g.row(oy * out_grid.width + ox) * S(0.25);
        t.accumulate(x, gx);
    });
}

// ---- gradient reversal and losses ---------------------------------------------

template <typename S>
Var<S> grl(Var<S> a, S lambda) {
    return a.tape->record(a.value(), {a}, [a, lambda](Tape<S>& t, const Mat<S>& g) {
        t.accumulate(a, g * lambda);
    });
}

template <typename S>
Var<S> cross_entropy(Var<S> logits, std::span<const int> labels) {
    const Mat<S>& z = logits.value();
    if (static_cast<Eigen::Index>(labels.size()) != z.rows())
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(z.rows()) + " rows");
    if (z.rows() == 0) throw ShapeError("cross_entropy: empty batch");
    Mat<S> probs(z.rows(), z.cols());
    S total = 0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const int y = labels[r];
        if (y < 0 || y >= z.cols()) throw ShapeError("cross_entropy: label out of range");
        const S m = z.row(r).maxCoeff();
        probs.row(r) = (z.row(r).array() - m).exp();
        const S sum = probs.row(r).sum();
        probs.row(r) /= sum;
        total += std::log(sum) + m - z(r, y);
    }
    const S inv = S(1) / static_cast<S>(z.rows());
    std::vector<int> ys(labels.begin(), labels.end());
    return logits.tape->record(Mat<S>::Constant(1, 1, total * inv), {logits},
                               [logits, probs = std::move(probs), ys = std::move(ys), inv](Tape<S>& t, const Mat<S>& g) {
                                   Mat<S> gz = probs;
                                   for (std::size_t r = 0; r < ys.size(); ++r) gz(r, ys[r]) -= S(1);
                                   t.accumulate(logits, gz * (g(0, 0) * inv));
                               });
}

template <typename S>
Var<S> external_loss(Var<S> input, S value, Mat<S> grad) {
    if (grad.rows() != input.rows() || grad.cols() != input.cols())
        throw ShapeError("external_loss: gradient shape does not match input");
    return input.tape->record(Mat<S>::Constant(1, 1, value), {input},
                              [input, grad = std::move(grad)](Tape<S>& t, const Mat<S>& g) {
                                  t.accumulate(input, grad * g(0, 0));
                              });
}

#define QDAVPR_INSTANTIATE(S)                                                            \
    template class Tape<S>;                                                              \
    template Var<S> add(Var<S>, Var<S>);                                                 \
    template Var<S> sub(Var<S>, Var<S>);                                                 \
    template Var<S> scale(Var<S>, S);                                                    \
    template Var<S> add_row(Var<S>, Var<S>);                                             \
    template Var<S> relu(Var<S>);                                                        \
    template Var<S> reshape(Var<S>, Eigen::Index, Eigen::Index);                         \
    template Var<S> slice_cols(Var<S>, Eigen::Index, Eigen::Index);                      \
    template Var<S> slice_rows(Var<S>, Eigen::Index, Eigen::Index);                      \
    template Var<S> concat_cols(std::span<const Var<S>>);                                \
    template Var<S> concat_rows(std::span<const Var<S>>);                                \
    template Var<S> mean_rows(Var<S>);                                                   \
    template Var<S> sum_all(std::span<const Var<S>>);                                    \
    template Var<S> matmul(Var<S>, Var<S>);                                              \
    template Var<S> matmul_nt(Var<S>, Var<S>);                                           \
    template Var<S> linear(Var<S>, Var<S>, Var<S>);                                      \
    template Var<S> softmax_rows(Var<S>);                                                \
    template Var<S> layer_norm(Var<S>, Var<S>, Var<S>, S);                               \
    template Var<S> normalize_rows(Var<S>, S);                                           \
    template Var<S> normalize_all(Var<S>, S);                                            \
    template Var<S> conv3x3(Var<S>, Grid, Var<S>, Var<S>);                               \
    template Var<S> avg_pool2x2(Var<S>, Grid);                                           \
    template Var<S> grl(Var<S>, S);                                                      \
    template Var<S> cross_entropy(Var<S>, std::span<const int>);                         \
    template Var<S> external_loss(Var<S>, S, Mat<S>);

QDAVPR_INSTANTIATE(float)
QDAVPR_INSTANTIATE(double)

#undef QDAVPR_INSTANTIATE

}  // namespace qdavpr::ad
