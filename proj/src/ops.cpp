#include "picg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace picg {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw shape_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
}

}  // namespace

Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    out.add_(b->value);
    return make_op(std::move(out), {a, b}, [](Node& self, const GradBufferFn& gbuf) {
        for (auto& parent : self.parents) {
            if (!parent->requires_grad) continue;
            gbuf(parent.get()).add_(self.grad);
        }
    });
}

Var add_const(const Var& a, Tensor c) {
    check_same_shape(a->value, c, "add_const");
    Tensor out = a->value;
    out.add_(c);
    return make_op(std::move(out), {a}, [](Node& self, const GradBufferFn& gbuf) {
        gbuf(self.parents[0].get()).add_(self.grad);
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    out.scale_(s);
    return make_op(std::move(out), {a}, [s](Node& self, const GradBufferFn& gbuf) {
        Tensor& ga = gbuf(self.parents[0].get());
        const int64_t n = self.grad.numel();
        for (int64_t i = 0; i < n; ++i) ga[i] += s * self.grad[i];
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    const int64_t m = x->value.rows(), in = x->value.cols();
    const int64_t out_dim = weight->value.rows();
    if (weight->value.cols() != in)
        throw shape_error("linear: weight in-dim " + std::to_string(weight->value.cols()) +
                          " vs input " + std::to_string(in));
    Tensor y({m, out_dim});
    gemm(false, true, m, out_dim, in, 1.0, x->value.data(), in, weight->value.data(), in, 0.0,
         y.data(), out_dim);
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < out_dim; ++j) y.at(i, j) += bias->value[j];
    return make_op(std::move(y), {x, weight, bias}, [](Node& self, const GradBufferFn& gbuf) {
        const Var& x = self.parents[0];
        const Var& w = self.parents[1];
        const Var& b = self.parents[2];
        const int64_t m = x->value.rows(), in = x->value.cols(), out_dim = w->value.rows();
        const Tensor& gy = self.grad;
        if (x->requires_grad) {
            // dX = dY * W
            gemm(false, false, m, in, out_dim, 1.0, gy.data(), out_dim, w->value.data(), in, 1.0,
                 gbuf(x.get()).data(), in);
        }
        if (w->requires_grad) {
            // dW = dY^T * X
            gemm(true, false, out_dim, in, m, 1.0, gy.data(), out_dim, x->value.data(), in, 1.0,
                 gbuf(w.get()).data(), in);
        }
        if (b->requires_grad) {
            Tensor& gb = gbuf(b.get());
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < out_dim; ++j) gb[j] += gy.at(i, j);
        }
    });
}

Var matmul(const Var& a, const Var& b) {
    const int64_t m = a->value.rows(), k = a->value.cols(), n = b->value.cols();
    if (b->value.rows() != k) throw shape_error("matmul: inner dims disagree");
    Tensor y({m, n});
    gemm(false, false, m, n, k, 1.0, a->value.data(), k, b->value.data(), n, 0.0, y.data(), n);
    return make_op(std::move(y), {a, b}, [](Node& self, const GradBufferFn& gbuf) {
        const Var& a = self.parents[0];
        const Var& b = self.parents[1];
        const int64_t m = a->value.rows(), k = a->value.cols(), n = b->value.cols();
        const Tensor& gy = self.grad;
        if (a->requires_grad)
            gemm(false, true, m, k, n, 1.0, gy.data(), n, b->value.data(), n, 1.0,
                 gbuf(a.get()).data(), k);
        if (b->requires_grad)
            gemm(true, false, k, n, m, 1.0, a->value.data(), k, gy.data(), n, 1.0,
                 gbuf(b.get()).data(), n);
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const int64_t m = a->value.rows(), k = a->value.cols(), n = b->value.rows();
    if (b->value.cols() != k) throw shape_error("matmul_nt: inner dims disagree");
    Tensor y({m, n});
    gemm(false, true, m, n, k, 1.0, a->value.data(), k, b->value.data(), k, 0.0, y.data(), n);
    return make_op(std::move(y), {a, b}, [](Node& self, const GradBufferFn& gbuf) {
        const Var& a = self.parents[0];
        const Var& b = self.parents[1];
        const int64_t m = a->value.rows(), k = a->value.cols(), n = b->value.rows();
        const Tensor& gy = self.grad;
        if (a->requires_grad)
            gemm(false, false, m, k, n, 1.0, gy.data(), n, b->value.data(), k, 1.0,
                 gbuf(a.get()).data(), k);
        if (b->requires_grad)
            gemm(true, false, n, k, m, 1.0, gy.data(), n, a->value.data(), k, 1.0,
                 gbuf(b.get()).data(), k);
    });
}

Var row_softmax(const Var& a) {
    const int64_t m = a->value.rows(), n = a->value.cols();
    Tensor y({m, n});
    for (int64_t i = 0; i < m; ++i) {
        const double* xi = a->value.data() + i * n;
        double* yi = y.data() + i * n;
        double mx = xi[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < n; ++j) yi[j] *= inv;
    }
    return make_op(std::move(y), {a}, [](Node& self, const GradBufferFn& gbuf) {
        const int64_t m = self.value.rows(), n = self.value.cols();
        Tensor& ga = gbuf(self.parents[0].get());
        for (int64_t i = 0; i < m; ++i) {
            const double* yi = self.value.data() + i * n;
            const double* gi = self.grad.data() + i * n;
            double dot = 0.0;
            for (int64_t j = 0; j < n; ++j) dot += gi[j] * yi[j];
            double* out = ga.data() + i * n;
            for (int64_t j = 0; j < n; ++j) out[j] += yi[j] * (gi[j] - dot);
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const int64_t m = x->value.rows(), d = x->value.cols();
    Tensor y({m, d});
    Tensor xhat({m, d});
    Tensor inv_std({m});
    for (int64_t i = 0; i < m; ++i) {
        const double* xi = x->value.data() + i * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += xi[j];
        mean /= double(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = xi[j] - mean;
            var += c * c;
        }
        var /= double(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        double* xh = xhat.data() + i * d;
        double* yi = y.data() + i * d;
        for (int64_t j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mean) * is;
            yi[j] = xh[j] * gain->value[j] + bias->value[j];
        }
    }
    return make_op(std::move(y), {x, gain, bias},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std)](
                       Node& self, const GradBufferFn& gbuf) {
                       const Var& x = self.parents[0];
                       const Var& gain = self.parents[1];
                       const Var& bias = self.parents[2];
                       const int64_t m = x->value.rows(), d = x->value.cols();
                       const Tensor& gy = self.grad;
                       if (gain->requires_grad) {
                           Tensor& gg = gbuf(gain.get());
                           for (int64_t i = 0; i < m; ++i)
                               for (int64_t j = 0; j < d; ++j)
                                   gg[j] += gy.at(i, j) * xhat.at(i, j);
                       }
                       if (bias->requires_grad) {
                           Tensor& gb = gbuf(bias.get());
                           for (int64_t i = 0; i < m; ++i)
                               for (int64_t j = 0; j < d; ++j) gb[j] += gy.at(i, j);
                       }
                       if (x->requires_grad) {
                           Tensor& gx = gbuf(x.get());
                           for (int64_t i = 0; i < m; ++i) {
                               double mean_g = 0.0, mean_gx = 0.0;
                               for (int64_t j = 0; j < d; ++j) {
                                   const double t = gy.at(i, j) * gain->value[j];
                                   mean_g += t;
                                   mean_gx += t * xhat.at(i, j);
                               }
                               mean_g /= double(d);
                               mean_gx /= double(d);
                               for (int64_t j = 0; j < d; ++j) {
                                   const double t = gy.at(i, j) * gain->value[j];
                                   gx.at(i, j) +=
                                       (t - mean_g - xhat.at(i, j) * mean_gx) * inv_std[i];
                               }
                           }
                       }
                   });
}

Var relu(const Var& a) {
    Tensor y = a->value;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::max(0.0, y[i]);
    return make_op(std::move(y), {a}, [](Node& self, const GradBufferFn& gbuf) {
        Tensor& ga = gbuf(self.parents[0].get());
        const Tensor& x = self.parents[0]->value;
        for (int64_t i = 0; i < x.numel(); ++i)
            if (x[i] > 0.0) ga[i] += self.grad[i];
    });
}

Var gelu(const Var& a) {
    Tensor y = a->value;
    for (int64_t i = 0; i < y.numel(); ++i) {
        const double x = y[i];
        y[i] = 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
    }
    return make_op(std::move(y), {a}, [](Node& self, const GradBufferFn& gbuf) {
        Tensor& ga = gbuf(self.parents[0].get());
        const Tensor& x = self.parents[0]->value;
        for (int64_t i = 0; i < x.numel(); ++i) {
            const double v = x[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865475244));
            const double pdf = std::exp(-0.5 * v * v) * 0.3989422804014326779;
            ga[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

Var embedding_rows(const Var& table, const std::vector<int>& ids) {
    const int64_t d = table->value.cols();
    const int64_t m = int64_t(ids.size());
    Tensor y({m, d});
    for (int64_t i = 0; i < m; ++i) {
        if (ids[size_t(i)] < 0 || ids[size_t(i)] >= table->value.rows())
            throw domain_error("embedding id out of range: " + std::to_string(ids[size_t(i)]));
        std::memcpy(y.data() + i * d, table->value.data() + int64_t(ids[size_t(i)]) * d,
                    size_t(d) * sizeof(double));
    }
    return make_op(std::move(y), {table}, [ids](Node& self, const GradBufferFn& gbuf) {
        Tensor& gt = gbuf(self.parents[0].get());
        const int64_t d = self.value.cols();
        for (size_t i = 0; i < ids.size(); ++i) {
            double* dst = gt.data() + int64_t(ids[i]) * d;
            const double* src = self.grad.data() + int64_t(i) * d;
            for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

Var slice_rows(const Var& a, int64_t r0, int64_t r1) {
    const int64_t n = a->value.cols();
    if (r0 < 0 || r1 > a->value.rows() || r0 > r1) throw shape_error("slice_rows out of range");
    Tensor y({r1 - r0, n});
    std::memcpy(y.data(), a->value.data() + r0 * n, size_t((r1 - r0) * n) * sizeof(double));
    return make_op(std::move(y), {a}, [r0](Node& self, const GradBufferFn& gbuf) {
        Tensor& ga = gbuf(self.parents[0].get());
        const int64_t n = self.value.cols(), m = self.value.rows();
        for (int64_t i = 0; i < m; ++i) {
            double* dst = ga.data() + (r0 + i) * n;
            const double* src = self.grad.data() + i * n;
            for (int64_t j = 0; j < n; ++j) dst[j] += src[j];
        }
    });
}

Var slice_cols(const Var& a, int64_t c0, int64_t c1) {
    const int64_t m = a->value.rows(), n = a->value.cols();
    if (c0 < 0 || c1 > n || c0 > c1) throw shape_error("slice_cols out of range");
    Tensor y({m, c1 - c0});
    for (int64_t i = 0; i < m; ++i)
        std::memcpy(y.data() + i * (c1 - c0), a->value.data() + i * n + c0,
                    size_t(c1 - c0) * sizeof(double));
    return make_op(std::move(y), {a}, [c0](Node& self, const GradBufferFn& gbuf) {
        Tensor& ga = gbuf(self.parents[0].get());
        const int64_t m = self.value.rows(), w = self.value.cols(), n = ga.cols();
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j) ga[i * n + c0 + j] += self.grad[i * w + j];
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw shape_error("concat_rows: empty");
    const int64_t n = parts[0]->value.cols();
    int64_t m = 0;
    for (const auto& p : parts) {
        if (p->value.cols() != n) throw shape_error("concat_rows: column mismatch");
        m += p->value.rows();
    }
    Tensor y({m, n});
    int64_t row = 0;
    for (const auto& p : parts) {
        std::memcpy(y.data() + row * n, p->value.data(),
                    size_t(p->value.numel()) * sizeof(double));
        row += p->value.rows();
    }
    std::vector<Var> parents = parts;
    return make_op(std::move(y), std::move(parents), [](Node& self, const GradBufferFn& gbuf) {
        const int64_t n = self.value.cols();
        int64_t row = 0;
        for (auto& p : self.parents) {
            const int64_t pm = p->value.rows();
            if (p->requires_grad) {
                Tensor& gp = gbuf(p.get());
                const double* src = self.grad.data() + row * n;
                for (int64_t i = 0; i < pm * n; ++i) gp[i] += src[i];
            }
            row += pm;
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw shape_error("concat_cols: empty");
    const int64_t m = parts[0]->value.rows();
    int64_t n = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != m) throw shape_error("concat_cols: row mismatch");
        n += p->value.cols();
    }
    Tensor y({m, n});
    int64_t col = 0;
    for (const auto& p : parts) {
        const int64_t pn = p->value.cols();
        for (int64_t i = 0; i < m; ++i)
            std::memcpy(y.data() + i * n + col, p->value.data() + i * pn,
                        size_t(pn) * sizeof(double));
        col += pn;
    }
    std::vector<Var> parents = parts;
    return make_op(std::move(y), std::move(parents), [](Node& self, const GradBufferFn& gbuf) {
        const int64_t m = self.value.rows(), n = self.value.cols();
        int64_t col = 0;
        for (auto& p : self.parents) {
            const int64_t pn = p->value.cols();
            if (p->requires_grad) {
                Tensor& gp = gbuf(p.get());
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < pn; ++j) gp[i * pn + j] += self.grad[i * n + col + j];
            }
            col += pn;
        }
    });
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
    if (Tensor::numel_of(shape) != a->value.numel()) throw shape_error("reshape: numel mismatch");
    Tensor y = a->value;
    y = Tensor(std::move(shape), std::vector<double>(a->value.data(),
                                                     a->value.data() + a->value.numel()));
    return make_op(std::move(y), {a}, [](Node& self, const GradBufferFn& gbuf) {
        Tensor& ga = gbuf(self.parents[0].get());
        for (int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
    });
}

Var cross_entropy_mean(const Var& logits, const std::vector<int>& targets,
                       const std::vector<char>& supervised) {
    const int64_t m = logits->value.rows(), v = logits->value.cols();
    if (int64_t(targets.size()) != m || int64_t(supervised.size()) != m)
        throw shape_error("cross_entropy_mean: target size mismatch");
    int64_t count = 0;
    Tensor probs({m, v});
    double total = 0.0;
    for (int64_t i = 0; i < m; ++i) {
        if (!supervised[size_t(i)]) continue;
        const double* zi = logits->value.data() + i * v;
        double mx = zi[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, zi[j]);
        double sum = 0.0;
        double* pi = probs.data() + i * v;
        for (int64_t j = 0; j < v; ++j) {
            pi[j] = std::exp(zi[j] - mx);
            sum += pi[j];
        }
        const double inv = 1.0 / sum;
        for (int64_t j = 0; j < v; ++j) pi[j] *= inv;
        total += -(zi[targets[size_t(i)]] - mx - std::log(sum));
        ++count;
    }
    Tensor y({1});
    y[0] = count > 0 ? total / double(count) : 0.0;
    if (count == 0) return make_constant(std::move(y));
    return make_op(std::move(y), {logits},
                   [targets, supervised, probs = std::move(probs), count](
                       Node& self, const GradBufferFn& gbuf) {
                       Tensor& gl = gbuf(self.parents[0].get());
                       const int64_t m = gl.rows(), v = gl.cols();
                       const double g = self.grad[0] / double(count);
                       for (int64_t i = 0; i < m; ++i) {
                           if (!supervised[size_t(i)]) continue;
                           const double* pi = probs.data() + i * v;
                           double* gi = gl.data() + i * v;
                           for (int64_t j = 0; j < v; ++j) gi[j] += g * pi[j];
                           gi[targets[size_t(i)]] -= g;
                       }
                   });
}

Var focal_loss_op(const Var& logits, int label_index, const std::vector<double>& class_weights,
                  double gamma) {
    const int64_t c = logits->value.numel();
    if (label_index < 0 || label_index >= c)
        throw domain_error("focal loss label index out of range: " + std::to_string(label_index));
    if (int64_t(class_weights.size()) != c)
        throw domain_error("focal loss weight count mismatch");
    const double* z = logits->value.data();
    double mx = z[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, z[j]);
    double sum = 0.0;
    std::vector<double> p(static_cast<size_t>(c));
    for (int64_t j = 0; j < c; ++j) {
        p[size_t(j)] = std::exp(z[j] - mx);
        sum += p[size_t(j)];
    }
    for (auto& v : p) v /= sum;
    const double py = p[size_t(label_index)];
    const double logpy = z[label_index] - mx - std::log(sum);
    const double q = std::max(1.0 - py, 0.0);
    const double w = class_weights[size_t(label_index)];
    Tensor y({1});
    y[0] = -w * std::pow(q, gamma) * logpy;
    return make_op(
        std::move(y), {logits},
        [label_index, w, gamma, p = std::move(p), py, logpy, q](Node& self,
                                                                const GradBufferFn& gbuf) {
            // dL/dp_y, with the gamma-modulated terms vanishing as p_y -> 1.
            double dLdp;
            if (gamma == 0.0) {
                dLdp = -w / py;
            } else if (q <= 0.0) {
                dLdp = 0.0;
            } else {
                dLdp = -w * (std::pow(q, gamma) / py - gamma * std::pow(q, gamma - 1.0) * logpy);
            }
            Tensor& gl = gbuf(self.parents[0].get());
            const double g = self.grad[0];
            for (size_t j = 0; j < p.size(); ++j) {
                const double indicator = (int(j) == label_index) ? 1.0 : 0.0;
                gl[int64_t(j)] += g * dLdp * py * (indicator - p[j]);
            }
        });
}

Var kl_from_teacher(const std::vector<double>& p, const Var& z, double temperature) {
    const int64_t d = z->value.numel();
    if (int64_t(p.size()) != d)
        throw shape_error("kl_from_teacher: teacher dim " + std::to_string(p.size()) +
                          " vs student dim " + std::to_string(d));
    if (temperature <= 0.0) throw domain_error("kl temperature must be positive");
    const double inv_t = 1.0 / temperature;
    double mx = z->value[0] * inv_t;
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, z->value[j] * inv_t);
    double sum = 0.0;
    std::vector<double> q(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) {
        q[size_t(j)] = std::exp(z->value[j] * inv_t - mx);
        sum += q[size_t(j)];
    }
    const double log_sum = std::log(sum);
    double loss = 0.0;
    for (int64_t j = 0; j < d; ++j) {
        q[size_t(j)] /= sum;
        const double pj = p[size_t(j)];
        if (pj > 0.0) loss += pj * (std::log(pj) - (z->value[j] * inv_t - mx - log_sum));
    }
    Tensor y({1});
    y[0] = loss;
    return make_op(std::move(y), {z},
                   [p, q = std::move(q), inv_t](Node& self, const GradBufferFn& gbuf) {
                       Tensor& gz = gbuf(self.parents[0].get());
                       const double g = self.grad[0];
                       for (size_t j = 0; j < p.size(); ++j)
                           gz[int64_t(j)] += g * (q[j] - p[j]) * inv_t;
                   });
}

namespace {

struct ConvDims {
    int64_t c, d, h, w;
    int64_t oc, kd, kh, kw;
    int64_t od, oh, ow;
    int64_t k, p;  // gemm dims: k = c*kd*kh*kw, p = od*oh*ow
};

ConvDims conv_dims(const Tensor& x, const Tensor& weight, std::array<int, 3> stride,
                   std::array<int, 3> pad) {
    if (x.ndim() != 4) throw shape_error("conv3d expects [C,D,H,W] input, got " + x.shape_str());
    if (weight.ndim() != 5) throw shape_error("conv3d expects 5-D weight, got " +
                                              weight.shape_str());
    ConvDims cd;
    cd.c = x.dim(0);
    cd.d = x.dim(1);
    cd.h = x.dim(2);
    cd.w = x.dim(3);
    cd.oc = weight.dim(0);
    cd.kd = weight.dim(2);
    cd.kh = weight.dim(3);
    cd.kw = weight.dim(4);
    if (weight.dim(1) != cd.c)
        throw shape_error("conv3d channel mismatch: input " + x.shape_str() + " weight " +
                          weight.shape_str());
    cd.od = (cd.d + 2 * pad[0] - cd.kd) / stride[0] + 1;
    cd.oh = (cd.h + 2 * pad[1] - cd.kh) / stride[1] + 1;
    cd.ow = (cd.w + 2 * pad[2] - cd.kw) / stride[2] + 1;
    if (cd.od <= 0 || cd.oh <= 0 || cd.ow <= 0)
        throw shape_error("conv3d kernel larger than padded input: input " + x.shape_str() +
                          " weight " + weight.shape_str());
    cd.k = cd.c * cd.kd * cd.kh * cd.kw;
    cd.p = cd.od * cd.oh * cd.ow;
    return cd;
}

Tensor im2col(const Tensor& x, const ConvDims& cd, std::array<int, 3> stride,
              std::array<int, 3> pad) {
    Tensor col({cd.k, cd.p});
    int64_t row = 0;
    for (int64_t c = 0; c < cd.c; ++c) {
        const double* xc = x.data() + c * cd.d * cd.h * cd.w;
        for (int64_t dz = 0; dz < cd.kd; ++dz)
            for (int64_t dy = 0; dy < cd.kh; ++dy)
                for (int64_t dx = 0; dx < cd.kw; ++dx) {
                    double* dst = col.data() + row * cd.p;
                    int64_t idx = 0;
                    for (int64_t oz = 0; oz < cd.od; ++oz) {
                        const int64_t z = oz * stride[0] - pad[0] + dz;
                        const bool z_ok = z >= 0 && z < cd.d;
                        for (int64_t oy = 0; oy < cd.oh; ++oy) {
                            const int64_t yy = oy * stride[1] - pad[1] + dy;
                            const bool y_ok = z_ok && yy >= 0 && yy < cd.h;
                            const double* src = xc + (z * cd.h + yy) * cd.w;
                            for (int64_t ox = 0; ox < cd.ow; ++ox, ++idx) {
                                const int64_t xx = ox * stride[2] - pad[2] + dx;
                                dst[idx] = (y_ok && xx >= 0 && xx < cd.w) ? src[xx] : 0.0;
                            }
                        }
                    }
                    ++row;
                }
    }
    return col;
}

void col2im_add(const Tensor& col, const ConvDims& cd, std::array<int, 3> stride,
                std::array<int, 3> pad, Tensor& gx) {
    int64_t row = 0;
    for (int64_t c = 0; c < cd.c; ++c) {
        double* xc = gx.data() + c * cd.d * cd.h * cd.w;
        for (int64_t dz = 0; dz < cd.kd; ++dz)
            for (int64_t dy = 0; dy < cd.kh; ++dy)
                for (int64_t dx = 0; dx < cd.kw; ++dx) {
                    const double* src = col.data() + row * cd.p;
                    int64_t idx = 0;
                    for (int64_t oz = 0; oz < cd.od; ++oz) {
                        const int64_t z = oz * stride[0] - pad[0] + dz;
                        const bool z_ok = z >= 0 && z < cd.d;
                        for (int64_t oy = 0; oy < cd.oh; ++oy) {
                            const int64_t yy = oy * stride[1] - pad[1] + dy;
                            const bool y_ok = z_ok && yy >= 0 && yy < cd.h;
                            double* dst = xc + (z * cd.h + yy) * cd.w;
                            for (int64_t ox = 0; ox < cd.ow; ++ox, ++idx) {
                                const int64_t xx = ox * stride[2] - pad[2] + dx;
                                if (y_ok && xx >= 0 && xx < cd.w) dst[xx] += src[idx];
                            }
                        }
                    }
                    ++row;
                }
    }
}

}  // namespace

Var conv3d(const Var& x, const Var& weight, const Var& bias, std::array<int, 3> stride,
           std::array<int, 3> pad) {
    const ConvDims cd = conv_dims(x->value, weight->value, stride, pad);
    Tensor col = im2col(x->value, cd, stride, pad);
    Tensor y({cd.oc, cd.od, cd.oh, cd.ow});
    gemm(false, false, cd.oc, cd.p, cd.k, 1.0, weight->value.data(), cd.k, col.data(), cd.p, 0.0,
         y.data(), cd.p);
    for (int64_t o = 0; o < cd.oc; ++o) {
        double* yo = y.data() + o * cd.p;
        const double b = bias->value[o];
        for (int64_t i = 0; i < cd.p; ++i) yo[i] += b;
    }
    return make_op(std::move(y), {x, weight, bias},
                   [cd, stride, pad, col = std::move(col)](Node& self, const GradBufferFn& gbuf) {
                       const Var& x = self.parents[0];
                       const Var& w = self.parents[1];
                       const Var& b = self.parents[2];
                       const Tensor& gy = self.grad;
                       if (b->requires_grad) {
                           Tensor& gb = gbuf(b.get());
                           for (int64_t o = 0; o < cd.oc; ++o) {
                               const double* go = gy.data() + o * cd.p;
                               double acc = 0.0;
                               for (int64_t i = 0; i < cd.p; ++i) acc += go[i];
                               gb[o] += acc;
                           }
                       }
                       if (w->requires_grad) {
                           gemm(false, true, cd.oc, cd.k, cd.p, 1.0, gy.data(), cd.p, col.data(),
                                cd.p, 1.0, gbuf(w.get()).data(), cd.k);
                       }
                       if (x->requires_grad) {
                           Tensor gcol({cd.k, cd.p});
                           gemm(true, false, cd.k, cd.p, cd.oc, 1.0, w->value.data(), cd.k,
                                gy.data(), cd.p, 0.0, gcol.data(), cd.p);
                           col2im_add(gcol, cd, stride, pad, gbuf(x.get()));
                       }
                   });
}

Var maxpool3d(const Var& x, std::array<int, 3> kernel) {
    const Tensor& v = x->value;
    if (v.ndim() != 4) throw shape_error("maxpool3d expects [C,D,H,W], got " + v.shape_str());
    const int64_t c = v.dim(0), d = v.dim(1), h = v.dim(2), w = v.dim(3);
    const int64_t od = d / kernel[0], oh = h / kernel[1], ow = w / kernel[2];
    if (od == 0 || oh == 0 || ow == 0)
        throw shape_error("maxpool3d kernel exceeds input " + v.shape_str());
    Tensor y({c, od, oh, ow});
    std::vector<int64_t> argmax(static_cast<size_t>(c * od * oh * ow));
    int64_t out = 0;
    for (int64_t ci = 0; ci < c; ++ci) {
        const double* xc = v.data() + ci * d * h * w;
        for (int64_t oz = 0; oz < od; ++oz)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox, ++out) {
                    double best = -1e300;
                    int64_t best_idx = -1;
                    for (int64_t dz = 0; dz < kernel[0]; ++dz)
                        for (int64_t dy = 0; dy < kernel[1]; ++dy)
                            for (int64_t dx = 0; dx < kernel[2]; ++dx) {
                                const int64_t idx = ((oz * kernel[0] + dz) * h +
                                                     oy * kernel[1] + dy) *
                                                        w +
                                                    ox * kernel[2] + dx;
                                if (xc[idx] > best) {
                                    best = xc[idx];
                                    best_idx = ci * d * h * w + idx;
                                }
                            }
                    y[out] = best;
                    argmax[size_t(out)] = best_idx;
                }
    }
    return make_op(std::move(y), {x},
                   [argmax = std::move(argmax)](Node& self, const GradBufferFn& gbuf) {
                       Tensor& gx = gbuf(self.parents[0].get());
                       for (int64_t i = 0; i < self.grad.numel(); ++i)
                           gx[argmax[size_t(i)]] += self.grad[i];
                   });
}

Var global_mean_pool(const Var& x) {
    const Tensor& v = x->value;
    if (v.ndim() != 4) throw shape_error("global_mean_pool expects [C,D,H,W]");
    const int64_t c = v.dim(0), n = v.dim(1) * v.dim(2) * v.dim(3);
    Tensor y({1, c});
    for (int64_t ci = 0; ci < c; ++ci) {
        const double* xc = v.data() + ci * n;
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) acc += xc[i];
        y[ci] = acc / double(n);
    }
    return make_op(std::move(y), {x}, [](Node& self, const GradBufferFn& gbuf) {
        Tensor& gx = gbuf(self.parents[0].get());
        const int64_t c = self.value.cols();
        const int64_t n = gx.numel() / c;
        const double inv = 1.0 / double(n);
        for (int64_t ci = 0; ci < c; ++ci) {
            const double g = self.grad[ci] * inv;
            double* dst = gx.data() + ci * n;
            for (int64_t i = 0; i < n; ++i) dst[i] += g;
        }
    });
}

std::vector<double> softmax_values(const double* logits, int n, double temperature) {
    std::vector<double> p(static_cast<size_t>(n));
    const double inv_t = 1.0 / temperature;
    double mx = logits[0] * inv_t;
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i] * inv_t);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        p[size_t(i)] = std::exp(logits[i] * inv_t - mx);
        sum += p[size_t(i)];
    }
    for (auto& v : p) v /= sum;
    return p;
}

}  // namespace picg
