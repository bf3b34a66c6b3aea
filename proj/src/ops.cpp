#include "webnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace webnn {

namespace {

using detail::make_result;
using detail::Node;

template <typename T>
Node<T>& input(Node<T>& out, std::size_t k) {
    return *out.inputs[k];
}

// Index mapping from a broadcast output onto its two operands.
struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> a_strides; // per output axis, 0 on broadcast axes
    std::vector<std::size_t> b_strides;
};

std::vector<std::size_t> aligned_strides(const Shape& operand, const Shape& out) {
    std::vector<std::size_t> strides(out.size(), 0);
    std::size_t offset = out.size() - operand.size();
    std::size_t stride = 1;
    for (std::size_t i = operand.size(); i-- > 0;) {
        strides[offset + i] = operand[i] == 1 ? 0 : stride;
        stride *= operand[i];
    }
    return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    plan.out = broadcast_shapes(a, b);
    plan.a_strides = aligned_strides(a, plan.out);
    plan.b_strides = aligned_strides(b, plan.out);
    return plan;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
    const std::size_t rank = plan.out.size();
    const std::size_t total = shape_numel(plan.out);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t ia = 0;
    std::size_t ib = 0;
    for (std::size_t o = 0; o < total; ++o) {
        f(o, ia, ib);
        for (std::size_t axis = rank; axis-- > 0;) {
            ia += plan.a_strides[axis];
            ib += plan.b_strides[axis];
            if (++counter[axis] < plan.out[axis]) {
                break;
            }
            ia -= plan.a_strides[axis] * plan.out[axis];
            ib -= plan.b_strides[axis] * plan.out[axis];
            counter[axis] = 0;
        }
    }
}

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
    // Eight independent partial sums; fixed order keeps results reproducible.
    T acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t l = 0; l < 8; ++l) {
            acc[l] += a[i + l] * b[i + l];
        }
    }
    T tail = 0;
    for (; i < n; ++i) {
        tail += a[i] * b[i];
    }
    return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) +
           tail;
}

template <typename T>
void axpy(T* y, T alpha, const T* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void check_axis(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size()) {
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                             " out of range for shape " + shape_string(shape));
    }
}

// outer * extent * inner decomposition around one axis.
struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) {
        s.outer *= shape[i];
    }
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) {
        s.inner *= shape[i];
    }
    return s;
}

enum class BinaryKind { add, sub, mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind) {
    const char* name = kind == BinaryKind::add ? "add" : kind == BinaryKind::sub ? "sub" : "mul";
    auto apply = [kind](T x, T y) {
        switch (kind) {
        case BinaryKind::add:
            return x + y;
        case BinaryKind::sub:
            return x - y;
        default:
            return x * y;
        }
    };
    if (a.shape() == b.shape()) {
        std::vector<T> out(a.numel());
        auto da = a.data();
        auto db = b.data();
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = apply(da[i], db[i]);
        }
        return make_result<T>(a.shape(), std::move(out), {a, b}, name, [kind](Node<T>& self) {
            Node<T>& na = input(self, 0);
            Node<T>& nb = input(self, 1);
            const auto& g = self.grad;
            if (na.requires_grad) {
                auto& ga = na.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    ga[i] += kind == BinaryKind::mul ? g[i] * nb.data[i] : g[i];
                }
            }
            if (nb.requires_grad) {
                auto& gb = nb.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) {
                    gb[i] += kind == BinaryKind::mul ? g[i] * na.data[i]
                             : kind == BinaryKind::sub ? -g[i]
                                                       : g[i];
                }
            }
        });
    }

    BroadcastPlan plan = plan_broadcast(a.shape(), b.shape());
    std::vector<T> out(shape_numel(plan.out));
    auto da = a.data();
    auto db = b.data();
    for_each_broadcast(plan, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        out[o] = apply(da[ia], db[ib]);
    });
    Shape out_shape = plan.out;
    return make_result<T>(std::move(out_shape), std::move(out), {a, b}, name,
                          [kind, plan](Node<T>& self) {
                              Node<T>& na = input(self, 0);
                              Node<T>& nb = input(self, 1);
                              const auto& g = self.grad;
                              T* ga = na.requires_grad ? na.grad_buffer().data() : nullptr;
                              T* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
                              for_each_broadcast(plan, [&](std::size_t o, std::size_t ia,
                                                           std::size_t ib) {
                                  if (ga != nullptr) {
                                      ga[ia] += kind == BinaryKind::mul ? g[o] * nb.data[ib] : g[o];
                                  }
                                  if (gb != nullptr) {
                                      gb[ib] += kind == BinaryKind::mul ? g[o] * na.data[ia]
                                                : kind == BinaryKind::sub ? -g[o]
                                                                          : g[o];
                                  }
                              });
                          });
}

} // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (ea != eb && ea != 1 && eb != 1) {
            throw DimensionError("cannot broadcast " + shape_string(a) + " with " +
                                 shape_string(b));
        }
        out[i] = std::max(ea, eb);
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::add);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::sub);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::mul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    std::vector<T> out(x.data().begin(), x.data().end());
    for (T& v : out) {
        v *= factor;
    }
    return make_result<T>(x.shape(), std::move(out), {x}, "scale", [factor](Node<T>& self) {
        auto& gx = input(self, 0).grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += factor * self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = 0;
    for (T v : x.data()) {
        total += v;
    }
    return make_result<T>(Shape{1}, {total}, {x}, "sum", [](Node<T>& self) {
        auto& gx = input(self, 0).grad_buffer();
        for (T& g : gx) {
            g += self.grad[0];
        }
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> mean_over_axis(const Tensor<T>& x, std::size_t axis) {
    check_axis(x.shape(), axis, "mean_over_axis");
    const AxisSplit s = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) {
        out_shape.push_back(1);
    }
    std::vector<T> out(s.outer * s.inner, T(0));
    auto xd = x.data();
    const T inv = T(1) / static_cast<T>(s.extent);
    for (std::size_t o = 0; o < s.outer; ++o) {
        T* dst = out.data() + o * s.inner;
        for (std::size_t e = 0; e < s.extent; ++e) {
            const T* src = xd.data() + (o * s.extent + e) * s.inner;
            for (std::size_t i = 0; i < s.inner; ++i) {
                dst[i] += src[i];
            }
        }
        for (std::size_t i = 0; i < s.inner; ++i) {
            dst[i] *= inv;
        }
    }
    return make_result<T>(std::move(out_shape), std::move(out), {x}, "mean_over_axis",
                          [s, inv](Node<T>& self) {
                              auto& gx = input(self, 0).grad_buffer();
                              for (std::size_t o = 0; o < s.outer; ++o) {
                                  const T* g = self.grad.data() + o * s.inner;
                                  for (std::size_t e = 0; e < s.extent; ++e) {
                                      T* dst = gx.data() + (o * s.extent + e) * s.inner;
                                      for (std::size_t i = 0; i < s.inner; ++i) {
                                          dst[i] += g[i] * inv;
                                      }
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("cannot reshape " + shape_string(x.shape()) + " to " +
                             shape_string(shape));
    }
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>(std::move(shape), std::move(out), {x}, "reshape", [](Node<T>& self) {
        auto& gx = input(self, 0).grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
    if (x.rank() < 2) {
        throw DimensionError("transpose_last2 needs rank >= 2, got " + shape_string(x.shape()));
    }
    const std::size_t rows = x.shape()[x.rank() - 2];
    const std::size_t cols = x.shape()[x.rank() - 1];
    const std::size_t batch = x.numel() / (rows * cols);
    Shape out_shape = x.shape();
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    std::vector<T> out(x.numel());
    auto xd = x.data();
    for (std::size_t bi = 0; bi < batch; ++bi) {
        const T* src = xd.data() + bi * rows * cols;
        T* dst = out.data() + bi * rows * cols;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
    }
    return make_result<T>(std::move(out_shape), std::move(out), {x}, "transpose_last2",
                          [batch, rows, cols](Node<T>& self) {
                              auto& gx = input(self, 0).grad_buffer();
                              for (std::size_t bi = 0; bi < batch; ++bi) {
                                  const T* g = self.grad.data() + bi * rows * cols;
                                  T* dst = gx.data() + bi * rows * cols;
                                  for (std::size_t r = 0; r < rows; ++r) {
                                      for (std::size_t c = 0; c < cols; ++c) {
                                          dst[r * cols + c] += g[c * rows + r];
                                      }
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
    check_axis(x.shape(), axis, "narrow");
    if (length == 0 || start + length > x.shape()[axis]) {
        throw DimensionError("narrow: range [" + std::to_string(start) + ", " +
                             std::to_string(start + length) + ") exceeds axis " +
                             std::to_string(axis) + " of " + shape_string(x.shape()));
    }
    const AxisSplit s = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    std::vector<T> out(s.outer * length * s.inner);
    auto xd = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(xd.data() + (o * s.extent + start) * s.inner, length * s.inner,
                    out.data() + o * length * s.inner);
    }
    return make_result<T>(std::move(out_shape), std::move(out), {x}, "narrow",
                          [s, start, length](Node<T>& self) {
                              auto& gx = input(self, 0).grad_buffer();
                              for (std::size_t o = 0; o < s.outer; ++o) {
                                  const T* g = self.grad.data() + o * length * s.inner;
                                  T* dst = gx.data() + (o * s.extent + start) * s.inner;
                                  for (std::size_t i = 0; i < length * s.inner; ++i) {
                                      dst[i] += g[i];
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> pad_axis(const Tensor<T>& x, std::size_t axis, std::size_t extent) {
    check_axis(x.shape(), axis, "pad_axis");
    if (extent < x.shape()[axis]) {
        throw DimensionError("pad_axis: cannot pad axis " + std::to_string(axis) + " of " +
                             shape_string(x.shape()) + " down to " + std::to_string(extent));
    }
    const AxisSplit s = split_at(x.shape(), axis);
    Shape out_shape = x.shape();
    out_shape[axis] = extent;
    std::vector<T> out(s.outer * extent * s.inner, T(0));
    auto xd = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(xd.data() + o * s.extent * s.inner, s.extent * s.inner,
                    out.data() + o * extent * s.inner);
    }
    return make_result<T>(std::move(out_shape), std::move(out), {x}, "pad_axis",
                          [s, extent](Node<T>& self) {
                              auto& gx = input(self, 0).grad_buffer();
                              for (std::size_t o = 0; o < s.outer; ++o) {
                                  const T* g = self.grad.data() + o * extent * s.inner;
                                  T* dst = gx.data() + o * s.extent * s.inner;
                                  for (std::size_t i = 0; i < s.extent * s.inner; ++i) {
                                      dst[i] += g[i];
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t axis, std::size_t index) {
    check_axis(x.shape(), axis, "select");
    if (index >= x.shape()[axis]) {
        throw DimensionError("select: index " + std::to_string(index) + " out of range for axis " +
                             std::to_string(axis) + " of " + shape_string(x.shape()));
    }
    Tensor<T> slice = narrow(x, axis, index, 1);
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) {
        out_shape.push_back(1);
    }
    return reshape(slice, std::move(out_shape));
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) {
        throw DimensionError("stack: no tensors given");
    }
    const Shape& part_shape = parts.front().shape();
    if (axis > part_shape.size()) {
        throw DimensionError("stack: axis " + std::to_string(axis) + " out of range for " +
                             shape_string(part_shape));
    }
    for (const auto& p : parts) {
        if (p.shape() != part_shape) {
            throw DimensionError("stack: mismatched shapes " + shape_string(part_shape) + " and " +
                                 shape_string(p.shape()));
        }
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= part_shape[i];
    }
    const std::size_t inner = shape_numel(part_shape) / outer;
    const std::size_t count = parts.size();
    Shape out_shape = part_shape;
    out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
    std::vector<T> out(outer * count * inner);
    for (std::size_t s = 0; s < count; ++s) {
        auto pd = parts[s].data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(pd.data() + o * inner, inner, out.data() + (o * count + s) * inner);
        }
    }
    return make_result<T>(std::move(out_shape), std::move(out), parts, "stack",
                          [outer, inner, count](Node<T>& self) {
                              for (std::size_t s = 0; s < count; ++s) {
                                  Node<T>& part = input(self, s);
                                  if (!part.requires_grad) {
                                      continue;
                                  }
                                  auto& gp = part.grad_buffer();
                                  for (std::size_t o = 0; o < outer; ++o) {
                                      const T* g = self.grad.data() + (o * count + s) * inner;
                                      T* dst = gp.data() + o * inner;
                                      for (std::size_t i = 0; i < inner; ++i) {
                                          dst[i] += g[i];
                                      }
                                  }
                              }
                          });
}

namespace {

// Batch bookkeeping for matmul: which left/right matrix feeds each output
// matrix, and the outputs grouped by their left matrix.
struct MatmulPlan {
    std::size_t m = 0, k = 0, n = 0;
    Shape out_shape;
    std::vector<std::size_t> a_index; // per output batch entry
    std::vector<std::size_t> b_index;
    std::vector<std::vector<std::size_t>> by_a; // outputs grouped by left matrix
};

MatmulPlan plan_matmul(const Shape& a, const Shape& b) {
    if (a.size() < 2 || b.size() < 2) {
        throw DimensionError("matmul needs rank >= 2 operands, got " + shape_string(a) + " and " +
                             shape_string(b));
    }
    MatmulPlan plan;
    plan.m = a[a.size() - 2];
    plan.k = a[a.size() - 1];
    plan.n = b[b.size() - 1];
    if (b[b.size() - 2] != plan.k) {
        throw DimensionError("matmul: inner extents differ for " + shape_string(a) + " and " +
                             shape_string(b));
    }
    Shape a_batch(a.begin(), a.end() - 2);
    Shape b_batch(b.begin(), b.end() - 2);
    BroadcastPlan bp;
    try {
        bp = plan_broadcast(a_batch, b_batch);
    } catch (const DimensionError&) {
        throw DimensionError("matmul: batch axes of " + shape_string(a) + " and " +
                             shape_string(b) + " do not broadcast");
    }
    const std::size_t total = shape_numel(bp.out);
    plan.a_index.resize(total);
    plan.b_index.resize(total);
    plan.by_a.resize(shape_numel(a_batch));
    for_each_broadcast(bp, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        plan.a_index[o] = ia;
        plan.b_index[o] = ib;
        plan.by_a[ia].push_back(o);
    });
    plan.out_shape = bp.out;
    plan.out_shape.push_back(plan.m);
    plan.out_shape.push_back(plan.n);
    return plan;
}

} // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    auto plan = std::make_shared<MatmulPlan>(plan_matmul(a.shape(), b.shape()));
    const std::size_t m = plan->m, k = plan->k, n = plan->n;
    std::vector<T> out(shape_numel(plan->out_shape), T(0));
    const T* ad = a.data().data();
    const T* bd = b.data().data();
    for (std::size_t ia = 0; ia < plan->by_a.size(); ++ia) {
        const T* amat = ad + ia * m * k;
        for (std::size_t r = 0; r < m; ++r) {
            const T* arow = amat + r * k;
            for (std::size_t o : plan->by_a[ia]) {
                const T* bmat = bd + plan->b_index[o] * k * n;
                T* orow = out.data() + o * m * n + r * n;
                if (n == 1) {
                    orow[0] = dot(arow, bmat, k);
                } else {
                    for (std::size_t t = 0; t < k; ++t) {
                        axpy(orow, arow[t], bmat + t * n, n);
                    }
                }
            }
        }
    }
    Shape out_shape = plan->out_shape;
    return make_result<T>(std::move(out_shape), std::move(out), {a, b}, "matmul",
                          [plan](Node<T>& self) {
                              Node<T>& na = input(self, 0);
                              Node<T>& nb = input(self, 1);
                              const std::size_t m = plan->m, k = plan->k, n = plan->n;
                              T* ga = na.requires_grad ? na.grad_buffer().data() : nullptr;
                              T* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
                              const T* g = self.grad.data();
                              for (std::size_t ia = 0; ia < plan->by_a.size(); ++ia) {
                                  const T* amat = na.data.data() + ia * m * k;
                                  for (std::size_t r = 0; r < m; ++r) {
                                      const T* arow = amat + r * k;
                                      for (std::size_t o : plan->by_a[ia]) {
                                          const std::size_t ib = plan->b_index[o];
                                          const T* bmat = nb.data.data() + ib * k * n;
                                          const T* grow = g + o * m * n + r * n;
                                          if (ga != nullptr) {
                                              // dA[r,t] += sum_j dOut[r,j] * B[t,j]
                                              T* garow = ga + ia * m * k + r * k;
                                              if (n == 1) {
                                                  axpy(garow, grow[0], bmat, k);
                                              } else {
                                                  for (std::size_t t = 0; t < k; ++t) {
                                                      garow[t] += dot(grow, bmat + t * n, n);
                                                  }
                                              }
                                          }
                                          if (gb != nullptr) {
                                              // dB[t,j] += A[r,t] * dOut[r,j]
                                              T* gbmat = gb + ib * k * n;
                                              if (n == 1) {
                                                  axpy(gbmat, grow[0], arow, k);
                                              } else {
                                                  for (std::size_t t = 0; t < k; ++t) {
                                                      axpy(gbmat + t * n, arow[t], grow, n);
                                                  }
                                              }
                                          }
                                      }
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double alpha) {
    if (alpha < 0) {
        throw ValidationError("leaky_relu slope must be >= 0, got " + std::to_string(alpha));
    }
    const T a = static_cast<T>(alpha);
    std::vector<T> out(x.data().begin(), x.data().end());
    for (T& v : out) {
        v = v >= T(0) ? v : a * v;
    }
    return make_result<T>(x.shape(), std::move(out), {x}, "leaky_relu", [a](Node<T>& self) {
        Node<T>& nx = input(self, 0);
        auto& gx = nx.grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += nx.data[i] >= T(0) ? self.grad[i] : a * self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> out(x.data().begin(), x.data().end());
    for (T& v : out) {
        v = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
    }
    return make_result<T>(x.shape(), std::move(out), {x}, "sigmoid", [](Node<T>& self) {
        auto& gx = input(self, 0).grad_buffer();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const T y = self.data[i];
            gx[i] += self.grad[i] * y * (T(1) - y);
        }
    });
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation activation) {
    return activation.kind == ActivationKind::leaky_relu ? leaky_relu(x, activation.alpha)
                                                         : sigmoid(x);
}

template <typename T>
Tensor<T> softmax_last_axis(const Tensor<T>& x) {
    const std::size_t c = x.shape().back();
    const std::size_t rows = x.numel() / c;
    std::vector<T> out(x.numel());
    auto xd = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = xd.data() + r * c;
        T* dst = out.data() + r * c;
        const T peak = *std::max_element(src, src + c);
        T total = 0;
        for (std::size_t j = 0; j < c; ++j) {
            dst[j] = std::exp(src[j] - peak);
            total += dst[j];
        }
        for (std::size_t j = 0; j < c; ++j) {
            dst[j] /= total;
        }
    }
    return make_result<T>(x.shape(), std::move(out), {x}, "softmax", [rows, c](Node<T>& self) {
        auto& gx = input(self, 0).grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = self.data.data() + r * c;
            const T* g = self.grad.data() + r * c;
            T inner = 0;
            for (std::size_t j = 0; j < c; ++j) {
                inner += g[j] * y[j];
            }
            for (std::size_t j = 0; j < c; ++j) {
                gx[r * c + j] += y[j] * (g[j] - inner);
            }
        }
    });
}

std::size_t conv_output_extent(std::size_t input, std::size_t kernel, std::size_t stride) {
    if (stride == 0) {
        throw ValidationError("convolution stride must be positive");
    }
    if (kernel == 0 || kernel > input) {
        throw DimensionError("kernel " + std::to_string(kernel) + " does not fit input extent " +
                             std::to_string(input));
    }
    return (input - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride) {
    if (x.rank() != 4 || kernel.rank() != 4) {
        throw DimensionError("conv2d expects x (N,C,H,W) and kernel (C_out,C_in,K,K), got " +
                             shape_string(x.shape()) + " and " + shape_string(kernel.shape()));
    }
    const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t cout = kernel.dim(0), ks = kernel.dim(2);
    if (kernel.dim(1) != cin || kernel.dim(3) != ks) {
        throw DimensionError("conv2d kernel " + shape_string(kernel.shape()) +
                             " does not match input " + shape_string(x.shape()));
    }
    if (bias.shape() != Shape{cout}) {
        throw DimensionError("conv2d bias must have shape (" + std::to_string(cout) + "), got " +
                             shape_string(bias.shape()));
    }
    const std::size_t oh = conv_output_extent(h, ks, stride);
    const std::size_t ow = conv_output_extent(w, ks, stride);
    std::vector<T> out(batch * cout * oh * ow);
    const T* xd = x.data().data();
    const T* kd = kernel.data().data();
    const T* bd = bias.data().data();
    for (std::size_t nb = 0; nb < batch; ++nb) {
        for (std::size_t co = 0; co < cout; ++co) {
            T* dst = out.data() + (nb * cout + co) * oh * ow;
            std::fill(dst, dst + oh * ow, bd[co]);
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const T* src = xd + (nb * cin + ci) * h * w;
                const T* kern = kd + (co * cin + ci) * ks * ks;
                for (std::size_t ky = 0; ky < ks; ++ky) {
                    for (std::size_t kx = 0; kx < ks; ++kx) {
                        const T wv = kern[ky * ks + kx];
                        for (std::size_t oy = 0; oy < oh; ++oy) {
                            const T* srow = src + (oy * stride + ky) * w + kx;
                            T* drow = dst + oy * ow;
                            for (std::size_t ox = 0; ox < ow; ++ox) {
                                drow[ox] += wv * srow[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    return make_result<T>(
        Shape{batch, cout, oh, ow}, std::move(out), {x, kernel, bias}, "conv2d",
        [=](Node<T>& self) {
            Node<T>& nx = input(self, 0);
            Node<T>& nk = input(self, 1);
            Node<T>& nbias = input(self, 2);
            T* gx = nx.requires_grad ? nx.grad_buffer().data() : nullptr;
            T* gk = nk.requires_grad ? nk.grad_buffer().data() : nullptr;
            T* gbias = nbias.requires_grad ? nbias.grad_buffer().data() : nullptr;
            for (std::size_t nb = 0; nb < batch; ++nb) {
                for (std::size_t co = 0; co < cout; ++co) {
                    const T* g = self.grad.data() + (nb * cout + co) * oh * ow;
                    if (gbias != nullptr) {
                        T total = 0;
                        for (std::size_t i = 0; i < oh * ow; ++i) {
                            total += g[i];
                        }
                        gbias[co] += total;
                    }
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const T* src = nx.data.data() + (nb * cin + ci) * h * w;
                        const T* kern = nk.data.data() + (co * cin + ci) * ks * ks;
                        for (std::size_t ky = 0; ky < ks; ++ky) {
                            for (std::size_t kx = 0; kx < ks; ++kx) {
                                const std::size_t kidx = (co * cin + ci) * ks * ks + ky * ks + kx;
                                T kacc = 0;
                                for (std::size_t oy = 0; oy < oh; ++oy) {
                                    const std::size_t row = (oy * stride + ky) * w + kx;
                                    const T* grow = g + oy * ow;
                                    for (std::size_t ox = 0; ox < ow; ++ox) {
                                        kacc += grow[ox] * src[row + ox * stride];
                                        if (gx != nullptr) {
                                            gx[(nb * cin + ci) * h * w + row + ox * stride] +=
                                                grow[ox] * kern[ky * ks + kx];
                                        }
                                    }
                                }
                                if (gk != nullptr) {
                                    gk[kidx] += kacc;
                                }
                            }
                        }
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logit, const Tensor<T>& target) {
    if (logit.shape() != target.shape()) {
        throw DimensionError("bce_with_logits: logit " + shape_string(logit.shape()) +
                             " and target " + shape_string(target.shape()) + " differ");
    }
    auto z = logit.data();
    auto t = target.data();
    for (T v : t) {
        if (v != T(0) && v != T(1)) {
            throw ValidationError("bce_with_logits: targets must be 0 or 1, got " +
                                  std::to_string(v));
        }
    }
    const std::size_t count = z.size();
    T total = 0;
    for (std::size_t i = 0; i < count; ++i) {
        total += std::max(z[i], T(0)) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    return make_result<T>(Shape{1}, {total / static_cast<T>(count)}, {logit, target}, "bce",
                          [count](Node<T>& self) {
                              Node<T>& nz = input(self, 0);
                              if (!nz.requires_grad) {
                                  return;
                              }
                              Node<T>& nt = input(self, 1);
                              auto& gz = nz.grad_buffer();
                              const T g = self.grad[0] / static_cast<T>(count);
                              for (std::size_t i = 0; i < count; ++i) {
                                  const T v = nz.data[i];
                                  const T p = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                                                        : std::exp(v) / (T(1) + std::exp(v));
                                  gz[i] += g * (p - nt.data[i]);
                              }
                          });
}

template <typename T>
Tensor<T> cross_entropy_from_logits(const Tensor<T>& logits, std::span<const int> labels) {
    if (logits.rank() != 2) {
        throw DimensionError("cross_entropy expects logits (N,C), got " +
                             shape_string(logits.shape()));
    }
    const std::size_t rows = logits.dim(0), classes = logits.dim(1);
    if (labels.size() != rows) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(rows) + " rows");
    }
    for (int label : labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw ValidationError("cross_entropy: label " + std::to_string(label) +
                                  " outside [0," + std::to_string(classes) + ")");
        }
    }
    std::vector<int> label_copy(labels.begin(), labels.end());
    std::vector<T> probs(rows * classes);
    auto z = logits.data();
    T total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = z.data() + r * classes;
        const T peak = *std::max_element(src, src + classes);
        T denom = 0;
        for (std::size_t j = 0; j < classes; ++j) {
            probs[r * classes + j] = std::exp(src[j] - peak);
            denom += probs[r * classes + j];
        }
        for (std::size_t j = 0; j < classes; ++j) {
            probs[r * classes + j] /= denom;
        }
        total += std::log(denom) + peak - src[label_copy[r]];
    }
    return make_result<T>(
        Shape{1}, {total / static_cast<T>(rows)}, {logits}, "cross_entropy",
        [rows, classes, label_copy = std::move(label_copy),
         probs = std::move(probs)](Node<T>& self) {
            auto& gz = input(self, 0).grad_buffer();
            const T g = self.grad[0] / static_cast<T>(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < classes; ++j) {
                    const T onehot = static_cast<int>(j) == label_copy[r] ? T(1) : T(0);
                    gz[r * classes + j] += g * (probs[r * classes + j] - onehot);
                }
            }
        });
}

#define WEBNN_INSTANTIATE_OPS(T)                                                                  \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
    template Tensor<T> scale(const Tensor<T>&, T);                                                \
    template Tensor<T> sum(const Tensor<T>&);                                                     \
    template Tensor<T> mean(const Tensor<T>&);                                                    \
    template Tensor<T> mean_over_axis(const Tensor<T>&, std::size_t);                             \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
    template Tensor<T> transpose_last2(const Tensor<T>&);                                         \
    template Tensor<T> narrow(const Tensor<T>&, std::size_t, std::size_t, std::size_t);           \
    template Tensor<T> pad_axis(const Tensor<T>&, std::size_t, std::size_t);                      \
    template Tensor<T> select(const Tensor<T>&, std::size_t, std::size_t);                        \
    template Tensor<T> stack(const std::vector<Tensor<T>>&, std::size_t);                         \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> activate(const Tensor<T>&, Activation);                                    \
    template Tensor<T> leaky_relu(const Tensor<T>&, double);                                      \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
    template Tensor<T> softmax_last_axis(const Tensor<T>&);                                       \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t); \
    template Tensor<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> cross_entropy_from_logits(const Tensor<T>&, std::span<const int>);

WEBNN_INSTANTIATE_OPS(float)
WEBNN_INSTANTIATE_OPS(double)

#undef WEBNN_INSTANTIATE_OPS

} // namespace webnn
