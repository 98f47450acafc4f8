#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ganlink/errors.hpp"

namespace ganlink {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream ss;
    ss << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) ss << (i ? "x" : "") << shape[i];
    ss << "]";
    return ss.str();
}

enum class Mode { train, infer };

template <typename T>
class Tape;

namespace detail {
inline std::atomic<std::uint64_t> g_tape_counter{1};
}

template <typename T>
struct TensorStorage {
    Shape shape;
    std::vector<T> values;
    bool requires_grad = false;
    std::vector<T> grad;       // empty until first accumulation
    std::uint64_t origin = 0;  // id of the tape that produced this tensor, 0 for leaves
};

// Shared handle to an n-dimensional row-major array. Values are immutable by
// convention after construction; only the gradient buffer accumulates.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return make(std::move(shape), {}, requires_grad, T(0));
    }

    static Tensor full(Shape shape, T value, bool requires_grad = false) {
        return make(std::move(shape), {}, requires_grad, value);
    }

    // Validates the element count and rejects non-finite values.
    static Tensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false) {
        check_shape(shape);
        if (numel(shape) != values.size())
            throw UsageError("tensor " + shape_str(shape) + " expects " +
                             std::to_string(numel(shape)) + " values, got " +
                             std::to_string(values.size()));
        for (T v : values)
            if (!std::isfinite(static_cast<double>(v)))
                throw Error("non-finite value in tensor " + shape_str(shape));
        Tensor t;
        t.data_ = std::make_shared<TensorStorage<T>>();
        t.data_->shape = std::move(shape);
        t.data_->values = std::move(values);
        t.data_->requires_grad = requires_grad;
        return t;
    }

    static Tensor uniform(Shape shape, T lo, T hi, std::mt19937_64& rng,
                          bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        std::uniform_real_distribution<double> dist(static_cast<double>(lo),
                                                    static_cast<double>(hi));
        for (T& v : t.data_->values) v = static_cast<T>(dist(rng));
        return t;
    }

    bool valid() const { return data_ != nullptr; }

    const Shape& shape() const { return data_->shape; }
    std::size_t size() const { return data_->values.size(); }
    std::size_t ndim() const { return data_->shape.size(); }
    std::size_t dim(std::size_t i) const { return data_->shape.at(i); }

    std::span<T> values() { return data_->values; }
    std::span<const T> values() const { return data_->values; }

    T value() const {
        if (size() != 1) throw UsageError("scalar access on tensor " + shape_str(shape()));
        return data_->values[0];
    }

    bool requires_grad() const { return data_->requires_grad; }
    void set_requires_grad(bool b) { data_->requires_grad = b; }

    bool has_grad() const { return !data_->grad.empty(); }

    // Allocates a zero gradient buffer on first use.
    std::span<T> grad() {
        if (data_->grad.empty()) data_->grad.assign(data_->values.size(), T(0));
        return data_->grad;
    }

    std::span<const T> grad_view() const {
        if (data_->grad.empty()) throw UsageError("gradient not populated");
        return data_->grad;
    }

    void clear_grad() { data_->grad.clear(); }

    // True when backpropagation must flow through this tensor.
    bool tracked() const { return data_->requires_grad || data_->origin != 0; }

    TensorStorage<T>* storage() const { return data_.get(); }
    const std::shared_ptr<TensorStorage<T>>& handle() const { return data_; }

private:
    static void check_shape(const Shape& shape) {
        for (std::size_t d : shape)
            if (d == 0) throw UsageError("zero extent in tensor shape " + shape_str(shape));
    }

    static Tensor make(Shape shape, std::vector<T>, bool requires_grad, T fill) {
        check_shape(shape);
        Tensor t;
        t.data_ = std::make_shared<TensorStorage<T>>();
        std::size_t n = numel(shape);
        t.data_->shape = std::move(shape);
        t.data_->values.assign(n, fill);
        t.data_->requires_grad = requires_grad;
        return t;
    }

    std::shared_ptr<TensorStorage<T>> data_;
};

template <typename T>
void assert_finite(const Tensor<T>& t, const std::string& context) {
    for (T v : t.values())
        if (!std::isfinite(static_cast<double>(v)))
            throw Error("non-finite value detected in " + context);
}

// Ordered record of executed operations. backward() replays the record in
// exact reverse execution order; gradients of intermediate results are pass
// local while gradients of leaves accumulate additively across calls.
template <typename T>
class Tape {
public:
    Tape() : id_(detail::g_tape_counter.fetch_add(1)) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t id() const { return id_; }
    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }

    void record(std::shared_ptr<TensorStorage<T>> output, std::function<void()> backward_fn) {
        output->origin = id_;
        nodes_.push_back(Node{std::move(output), std::move(backward_fn)});
    }

    static Tape* current() { return current_; }

    void run_backward(const Tensor<T>& loss) {
        if (loss.size() != 1)
            throw UsageError("backward requires a scalar loss, got " + shape_str(loss.shape()));
        if (loss.storage()->origin != id_)
            throw UsageError("loss tensor was not recorded on this tape");
        // Intermediate gradients are scratch: reset them so repeated backward
        // calls accumulate only into leaves.
        for (Node& n : nodes_) n.output->grad.clear();
        loss.storage()->grad.assign(1, T(1));
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            if (it->output->grad.empty()) continue; // no contribution reached this node
            it->backward();
        }
    }

private:
    struct Node {
        std::shared_ptr<TensorStorage<T>> output;
        std::function<void()> backward;
    };

    std::uint64_t id_;
    std::vector<Node> nodes_;

    static inline thread_local Tape* current_ = nullptr;

    template <typename U>
    friend class TapeScope;
};

// RAII activation of a tape on the current thread. Operations executed inside
// the scope are recorded; outside any scope they run forward-only.
template <typename T>
class TapeScope {
public:
    explicit TapeScope(Tape<T>& tape) : prev_(Tape<T>::current_) { Tape<T>::current_ = &tape; }
    ~TapeScope() { Tape<T>::current_ = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape<T>* prev_;
};

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
    tape.run_backward(loss);
}

namespace detail {

template <typename T>
std::span<T> grad_buf(TensorStorage<T>* s) {
    if (s->grad.empty()) s->grad.assign(s->values.size(), T(0));
    return s->grad;
}

template <typename T>
bool tracked(const TensorStorage<T>* s) {
    return s->requires_grad || s->origin != 0;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and shape operations
// ---------------------------------------------------------------------------

// out[n,o] = sum_i in[n,i] * w[i,o] + b[o]
template <typename T>
Tensor<T> dense(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (input.ndim() != 2 || weight.ndim() != 2 || bias.ndim() != 1 ||
        input.dim(1) != weight.dim(0) || weight.dim(1) != bias.dim(0))
        throw UsageError("dense: incompatible shapes input " + shape_str(input.shape()) +
                         ", weight " + shape_str(weight.shape()) + ", bias " +
                         shape_str(bias.shape()));
    const std::size_t n = input.dim(0), in_d = input.dim(1), out_d = weight.dim(1);
    Tensor<T> out = Tensor<T>::zeros({n, out_d});
    const T* x = input.values().data();
    const T* w = weight.values().data();
    const T* b = bias.values().data();
    T* y = out.values().data();
    for (std::size_t r = 0; r < n; ++r) {
        T* yr = y + r * out_d;
        for (std::size_t o = 0; o < out_d; ++o) yr[o] = b[o];
        const T* xr = x + r * in_d;
        for (std::size_t i = 0; i < in_d; ++i) {
            const T xv = xr[i];
            const T* wr = w + i * out_d;
            for (std::size_t o = 0; o < out_d; ++o) yr[o] += xv * wr[o];
        }
    }

    Tape<T>* tape = Tape<T>::current();
    if (tape && (input.tracked() || weight.tracked() || bias.tracked())) {
        auto xs = input.handle();
        auto ws = weight.handle();
        auto bs = bias.handle();
        auto os = out.handle();
        tape->record(os, [xs, ws, bs, os, n, in_d, out_d]() {
            const T* dy = os->grad.data();
            if (detail::tracked(xs.get())) {
                auto dx = detail::grad_buf(xs.get());
                const T* w = ws->values.data();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t i = 0; i < in_d; ++i) {
                        const T* wr = w + i * out_d;
                        const T* dyr = dy + r * out_d;
                        T acc = 0;
                        for (std::size_t o = 0; o < out_d; ++o) acc += wr[o] * dyr[o];
                        dx[r * in_d + i] += acc;
                    }
            }
            if (detail::tracked(ws.get())) {
                auto dw = detail::grad_buf(ws.get());
                const T* x = xs->values.data();
                for (std::size_t r = 0; r < n; ++r) {
                    const T* xr = x + r * in_d;
                    const T* dyr = dy + r * out_d;
                    for (std::size_t i = 0; i < in_d; ++i) {
                        const T xv = xr[i];
                        T* dwr = dw.data() + i * out_d;
                        for (std::size_t o = 0; o < out_d; ++o) dwr[o] += xv * dyr[o];
                    }
                }
            }
            if (detail::tracked(bs.get())) {
                auto db = detail::grad_buf(bs.get());
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t o = 0; o < out_d; ++o) db[o] += dy[r * out_d + o];
            }
        });
    }
    return out;
}

// out[n,o] = sum_i in[n,i] * w[o,i] + b[o]; the weight is read transposed so
// two call sites can share one matrix in opposing orientations.
template <typename T>
Tensor<T> dense_transposed(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias) {
    if (input.ndim() != 2 || weight.ndim() != 2 || bias.ndim() != 1 ||
        input.dim(1) != weight.dim(1) || weight.dim(0) != bias.dim(0))
        throw UsageError("dense_transposed: incompatible shapes input " +
                         shape_str(input.shape()) + ", weight " + shape_str(weight.shape()) +
                         ", bias " + shape_str(bias.shape()));
    const std::size_t n = input.dim(0), in_d = input.dim(1), out_d = weight.dim(0);
    Tensor<T> out = Tensor<T>::zeros({n, out_d});
    const T* x = input.values().data();
    const T* w = weight.values().data();
    const T* b = bias.values().data();
    T* y = out.values().data();
    for (std::size_t r = 0; r < n; ++r) {
        const T* xr = x + r * in_d;
        T* yr = y + r * out_d;
        for (std::size_t o = 0; o < out_d; ++o) {
            const T* wr = w + o * in_d;
            T acc = b[o];
            for (std::size_t i = 0; i < in_d; ++i) acc += xr[i] * wr[i];
            yr[o] = acc;
        }
    }

    Tape<T>* tape = Tape<T>::current();
    if (tape && (input.tracked() || weight.tracked() || bias.tracked())) {
        auto xs = input.handle();
        auto ws = weight.handle();
        auto bs = bias.handle();
        auto os = out.handle();
        tape->record(os, [xs, ws, bs, os, n, in_d, out_d]() {
            const T* dy = os->grad.data();
            if (detail::tracked(xs.get())) {
                auto dx = detail::grad_buf(xs.get());
                const T* w = ws->values.data();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t o = 0; o < out_d; ++o) {
                        const T g = dy[r * out_d + o];
                        const T* wr = w + o * in_d;
                        T* dxr = dx.data() + r * in_d;
                        for (std::size_t i = 0; i < in_d; ++i) dxr[i] += g * wr[i];
                    }
            }
            if (detail::tracked(ws.get())) {
                auto dw = detail::grad_buf(ws.get());
                const T* x = xs->values.data();
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t o = 0; o < out_d; ++o) {
                        const T g = dy[r * out_d + o];
                        const T* xr = x + r * in_d;
                        T* dwr = dw.data() + o * in_d;
                        for (std::size_t i = 0; i < in_d; ++i) dwr[i] += g * xr[i];
                    }
            }
            if (detail::tracked(bs.get())) {
                auto db = detail::grad_buf(bs.get());
                for (std::size_t r = 0; r < n; ++r)
                    for (std::size_t o = 0; o < out_d; ++o) db[o] += dy[r * out_d + o];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& inputs, std::size_t axis) {
    if (inputs.empty()) throw UsageError("concat: no inputs");
    const Shape& first = inputs[0].shape();
    if (axis >= first.size()) throw UsageError("concat: axis out of range");
    std::size_t axis_total = 0;
    for (const Tensor<T>& t : inputs) {
        if (t.ndim() != first.size())
            throw UsageError("concat: rank mismatch " + shape_str(t.shape()) + " vs " +
                             shape_str(first));
        for (std::size_t d = 0; d < first.size(); ++d)
            if (d != axis && t.dim(d) != first[d])
                throw UsageError("concat: extent mismatch off axis: " + shape_str(t.shape()) +
                                 " vs " + shape_str(first));
        axis_total += t.dim(axis);
    }
    Shape out_shape = first;
    out_shape[axis] = axis_total;

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

    Tensor<T> out = Tensor<T>::zeros(out_shape);
    T* y = out.values().data();
    const std::size_t out_stride = axis_total * inner;
    std::size_t offset = 0;
    for (const Tensor<T>& t : inputs) {
        const std::size_t a = t.dim(axis);
        const T* x = t.values().data();
        for (std::size_t r = 0; r < outer; ++r)
            std::copy_n(x + r * a * inner, a * inner, y + r * out_stride + offset * inner);
        offset += a;
    }

    Tape<T>* tape = Tape<T>::current();
    bool any = false;
    for (const Tensor<T>& t : inputs) any = any || t.tracked();
    if (tape && any) {
        std::vector<std::shared_ptr<TensorStorage<T>>> hs;
        std::vector<std::size_t> axes;
        for (const Tensor<T>& t : inputs) {
            hs.push_back(t.handle());
            axes.push_back(t.dim(axis));
        }
        auto os = out.handle();
        tape->record(os, [hs, axes, os, outer, inner, out_stride]() {
            const T* dy = os->grad.data();
            std::size_t offset = 0;
            for (std::size_t k = 0; k < hs.size(); ++k) {
                const std::size_t a = axes[k];
                if (detail::tracked(hs[k].get())) {
                    auto dx = detail::grad_buf(hs[k].get());
                    for (std::size_t r = 0; r < outer; ++r) {
                        const T* src = dy + r * out_stride + offset * inner;
                        T* dst = dx.data() + r * a * inner;
                        for (std::size_t i = 0; i < a * inner; ++i) dst[i] += src[i];
                    }
                }
                offset += a;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& input, Shape new_shape) {
    if (numel(new_shape) != input.size())
        throw UsageError("reshape: element count mismatch " + shape_str(input.shape()) +
                         " -> " + shape_str(new_shape));
    Tensor<T> out = Tensor<T>::from_values(std::move(new_shape),
                                           {input.values().begin(), input.values().end()});
    Tape<T>* tape = Tape<T>::current();
    if (tape && input.tracked()) {
        auto xs = input.handle();
        auto os = out.handle();
        tape->record(os, [xs, os]() {
            if (!detail::tracked(xs.get())) return;
            auto dx = detail::grad_buf(xs.get());
            const T* dy = os->grad.data();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
        });
    }
    return out;
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_elementwise(const Tensor<T>& input, Fwd fwd, Bwd bwd) {
    Tensor<T> out = Tensor<T>::zeros(input.shape());
    const T* x = input.values().data();
    T* y = out.values().data();
    const std::size_t n = input.size();
    for (std::size_t i = 0; i < n; ++i) y[i] = fwd(x[i]);

    Tape<T>* tape = Tape<T>::current();
    if (tape && input.tracked()) {
        auto xs = input.handle();
        auto os = out.handle();
        tape->record(os, [xs, os, bwd, n]() {
            if (!tracked(xs.get())) return;
            auto dx = grad_buf(xs.get());
            const T* dy = os->grad.data();
            const T* x = xs->values.data();
            const T* y = os->values.data();
            for (std::size_t i = 0; i < n; ++i) dx[i] += bwd(x[i], y[i]) * dy[i];
        });
    }
    return out;
}

} // namespace detail

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope) {
    if (!(slope > T(0) && slope < T(1)))
        throw UsageError("leaky_relu: slope must lie in (0,1)");
    return detail::unary_elementwise(
        input, [slope](T v) { return v > T(0) ? v : slope * v; },
        [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& input) {
    return detail::unary_elementwise(
        input, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid_act(const Tensor<T>& input) {
    return detail::unary_elementwise(
        input, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw UsageError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
    Tape<T>* tape = Tape<T>::current();
    if (tape && (a.tracked() || b.tracked())) {
        auto as = a.handle();
        auto bs = b.handle();
        auto os = out.handle();
        tape->record(os, [as, bs, os, n]() {
            const T* dy = os->grad.data();
            if (detail::tracked(as.get())) {
                auto da = detail::grad_buf(as.get());
                for (std::size_t i = 0; i < n; ++i) da[i] += dy[i];
            }
            if (detail::tracked(bs.get())) {
                auto db = detail::grad_buf(bs.get());
                for (std::size_t i = 0; i < n; ++i) db[i] += dy[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw UsageError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<T> out = Tensor<T>::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
    Tape<T>* tape = Tape<T>::current();
    if (tape && (a.tracked() || b.tracked())) {
        auto as = a.handle();
        auto bs = b.handle();
        auto os = out.handle();
        tape->record(os, [as, bs, os, n]() {
            const T* dy = os->grad.data();
            if (detail::tracked(as.get())) {
                auto da = detail::grad_buf(as.get());
                const T* bv = bs->values.data();
                for (std::size_t i = 0; i < n; ++i) da[i] += bv[i] * dy[i];
            }
            if (detail::tracked(bs.get())) {
                auto db = detail::grad_buf(bs.get());
                const T* av = as->values.data();
                for (std::size_t i = 0; i < n; ++i) db[i] += av[i] * dy[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& input, T factor) {
    return detail::unary_elementwise(
        input, [factor](T v) { return factor * v; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
    Tensor<T> out = Tensor<T>::zeros({1});
    T acc = 0;
    for (T v : input.values()) acc += v;
    out.values()[0] = acc;
    Tape<T>* tape = Tape<T>::current();
    if (tape && input.tracked()) {
        auto xs = input.handle();
        auto os = out.handle();
        tape->record(os, [xs, os]() {
            if (!detail::tracked(xs.get())) return;
            auto dx = detail::grad_buf(xs.get());
            const T g = os->grad[0];
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g;
        });
    }
    return out;
}

// Replicates a [N x C] feature across a spatial grid to [N x C x H x W].
template <typename T>
Tensor<T> tile_spatial(const Tensor<T>& input, std::size_t h, std::size_t w) {
    if (input.ndim() != 2)
        throw UsageError("tile_spatial: expects a rank-2 input, got " + shape_str(input.shape()));
    const std::size_t n = input.dim(0), c = input.dim(1), plane = h * w;
    Tensor<T> out = Tensor<T>::zeros({n, c, h, w});
    const T* x = input.values().data();
    T* y = out.values().data();
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const T v = x[r * c + ch];
            T* dst = y + (r * c + ch) * plane;
            for (std::size_t i = 0; i < plane; ++i) dst[i] = v;
        }
    Tape<T>* tape = Tape<T>::current();
    if (tape && input.tracked()) {
        auto xs = input.handle();
        auto os = out.handle();
        tape->record(os, [xs, os, n, c, plane]() {
            if (!detail::tracked(xs.get())) return;
            auto dx = detail::grad_buf(xs.get());
            const T* dy = os->grad.data();
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const T* src = dy + (r * c + ch) * plane;
                    T acc = 0;
                    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
                    dx[r * c + ch] += acc;
                }
        });
    }
    return out;
}

// Mean binary cross-entropy against a constant 0/1 target. Scores are clamped
// to [eps, 1-eps] before the logs; clamped coordinates get zero gradient.
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& score, int target) {
    if (target != 0 && target != 1) throw UsageError("bce_loss: target must be 0 or 1");
    constexpr double eps = 1e-7;
    const std::size_t n = score.size();
    if (n == 0) throw UsageError("bce_loss: empty score tensor");
    Tensor<T> out = Tensor<T>::zeros({1});
    double acc = 0;
    for (T v : score.values()) {
        double s = std::clamp(static_cast<double>(v), eps, 1.0 - eps);
        acc += target == 1 ? -std::log(s) : -std::log(1.0 - s);
    }
    out.values()[0] = static_cast<T>(acc / static_cast<double>(n));

    Tape<T>* tape = Tape<T>::current();
    if (tape && score.tracked()) {
        auto ss = score.handle();
        auto os = out.handle();
        tape->record(os, [ss, os, target, n]() {
            if (!detail::tracked(ss.get())) return;
            auto ds = detail::grad_buf(ss.get());
            const T g = os->grad[0];
            const T inv_n = T(1) / static_cast<T>(n);
            for (std::size_t i = 0; i < n; ++i) {
                double s = static_cast<double>(ss->values[i]);
                if (s < eps || s > 1.0 - eps) continue; // clamped: flat
                double d = target == 1 ? -1.0 / s : 1.0 / (1.0 - s);
                ds[i] += static_cast<T>(d) * inv_n * g;
            }
        });
    }
    return out;
}

// Mean squared error over all elements.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    if (pred.shape() != target.shape())
        throw UsageError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
    const std::size_t n = pred.size();
    Tensor<T> out = Tensor<T>::zeros({1});
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(pred.values()[i]) - static_cast<double>(target.values()[i]);
        acc += d * d;
    }
    out.values()[0] = static_cast<T>(acc / static_cast<double>(n));

    Tape<T>* tape = Tape<T>::current();
    if (tape && (pred.tracked() || target.tracked())) {
        auto ps = pred.handle();
        auto ts = target.handle();
        auto os = out.handle();
        tape->record(os, [ps, ts, os, n]() {
            const T g = os->grad[0];
            const T scale = T(2) / static_cast<T>(n);
            if (detail::tracked(ps.get())) {
                auto dp = detail::grad_buf(ps.get());
                for (std::size_t i = 0; i < n; ++i)
                    dp[i] += scale * (ps->values[i] - ts->values[i]) * g;
            }
            if (detail::tracked(ts.get())) {
                auto dt = detail::grad_buf(ts.get());
                for (std::size_t i = 0; i < n; ++i)
                    dt[i] -= scale * (ps->values[i] - ts->values[i]) * g;
            }
        });
    }
    return out;
}

} // namespace ganlink
