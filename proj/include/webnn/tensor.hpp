#pragma once

// Dense row-major tensors with a dynamic reverse-mode gradient tape.
//
// A Tensor is a cheap handle onto a shared node. Operations executed while
// gradients are enabled and at least one input requires a gradient record
// their inputs and a backward rule on the result node; `backward()` on a
// scalar result replays those rules in reverse topological order and then
// drops the recorded graph.

#include "webnn/errors.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace webnn {

using Shape = std::vector<std::size_t>;

enum class DType { f32, f64 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

const char* dtype_name(DType dtype);

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until a gradient reaches this node
    bool requires_grad = false;
    std::uint64_t sequence = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    /// Zero-initialised gradient storage, allocated on first use.
    std::vector<T>& grad_buffer();
};

std::uint64_t next_sequence();

} // namespace detail

template <typename T>
class Tensor {
public:
    using value_type = T;
    using node_type = detail::Node<T>;

    Tensor();
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return node_->data.size(); }
    static constexpr DType dtype() { return dtype_of<T>(); }

    std::span<const T> data() const { return node_->data; }
    /// Mutable view of the values; used by optimizers and finite differences.
    std::span<T> mutable_data() { return node_->data; }
    T item() const;
    T at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool flag);
    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient values; empty span when no gradient has been accumulated.
    std::span<const T> grad() const { return node_->grad; }
    void zero_grad();

    /// Same values, no gradient history, independent storage.
    Tensor detach() const;

    /// Accumulates d(this)/d(leaf) into every reachable leaf requiring a gradient.
    void backward() const;

    const std::shared_ptr<node_type>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<node_type> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<node_type> node_;
};

/// The recorded operations reachable from a root, in topological order.
template <typename T>
class GradientTape {
public:
    explicit GradientTape(const Tensor<T>& root);

    /// Producers precede consumers; the root is last.
    std::span<detail::Node<T>* const> nodes() const { return order_; }

    /// Runs every backward rule once, then releases the recorded graph.
    void run();

private:
    std::shared_ptr<detail::Node<T>> root_;
    std::vector<detail::Node<T>*> order_;
};

namespace detail {

/// Builds an op result. Inputs and the backward rule are only kept when
/// recording is enabled and some input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<Tensor<T>> inputs,
                      const char* op, std::function<void(Node<T>&)> backward);

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(Node<T>&)> backward);

} // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class GradientTape<float>;
extern template class GradientTape<double>;

} // namespace webnn
