#include "webnn/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace webnn {

namespace {

thread_local bool g_grad_enabled = true;

} // namespace

const char* dtype_name(DType dtype) {
    return dtype == DType::f32 ? "f32" : "f64";
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i != 0) {
            os << ',';
        }
        os << shape[i];
    }
    os << ')';
    return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

std::uint64_t next_sequence() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
}

template <typename T>
std::vector<T>& Node<T>::grad_buffer() {
    if (grad.empty()) {
        grad.assign(data.size(), T(0));
    }
    return grad;
}

template <typename T>
static Tensor<T> make_result_impl(Shape shape, std::vector<T> data,
                                  std::span<const Tensor<T>> inputs, const char* op,
                                  std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->sequence = next_sequence();
    node->op = op;
    if (grad_enabled()) {
        bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor<T>& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (const auto& t : inputs) {
                node->inputs.push_back(t.node());
            }
            node->backward = std::move(backward);
        }
    }
    return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<Tensor<T>> inputs,
                      const char* op, std::function<void(Node<T>&)> backward) {
    return make_result_impl<T>(std::move(shape), std::move(data),
                               std::span<const Tensor<T>>(inputs.begin(), inputs.size()), op,
                               std::move(backward));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(Node<T>&)> backward) {
    return make_result_impl<T>(std::move(shape), std::move(data),
                               std::span<const Tensor<T>>(inputs), op, std::move(backward));
}

template struct Node<float>;
template struct Node<double>;
template Tensor<float> make_result(Shape, std::vector<float>, std::initializer_list<Tensor<float>>,
                                   const char*, std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::initializer_list<Tensor<double>>, const char*,
                                    std::function<void(Node<double>&)>);
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   const char*, std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const std::vector<Tensor<double>>&,
                                    const char*, std::function<void(Node<double>&)>);

} // namespace detail

template <typename T>
Tensor<T>::Tensor() = default;

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad)
    : node_(std::make_shared<node_type>()) {
    for (std::size_t extent : shape) {
        if (extent == 0) {
            throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
        }
    }
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("shape " + shape_string(shape) + " needs " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(data.size()));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
    node_->sequence = detail::next_sequence();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    if (axis >= rank()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_string(shape()));
    }
    return node_->shape[axis];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) {
        throw DimensionError("item() needs a single-element tensor, got " + shape_string(shape()));
    }
    return node_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) {
        throw DimensionError("index rank does not match shape " + shape_string(shape()));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= node_->shape[axis]) {
            throw DimensionError("index out of range for shape " + shape_string(shape()));
        }
        flat = flat * node_->shape[axis] + i;
        ++axis;
    }
    return node_->data[flat];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
}

template <typename T>
void Tensor<T>::zero_grad() {
    node_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(node_->shape, node_->data, false);
}

template <typename T>
void Tensor<T>::backward() const {
    GradientTape<T> tape(*this);
    tape.run();
}

template <typename T>
GradientTape<T>::GradientTape(const Tensor<T>& root) : root_(root.node()) {
    if (root.numel() != 1) {
        throw DimensionError("backward() needs a scalar root, got " + shape_string(root.shape()));
    }
    if (!root.requires_grad()) {
        throw ValidationError("backward() root does not require a gradient");
    }
    // Iterative post-order DFS: a node is emitted after all of its inputs.
    std::unordered_set<const detail::Node<T>*> seen;
    std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
    stack.emplace_back(root_.get(), 0);
    seen.insert(root_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) {
                stack.emplace_back(child, 0);
            }
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
}

template <typename T>
void GradientTape<T>::run() {
    std::vector<T>& seed = root_->grad_buffer();
    seed[0] += T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        detail::Node<T>* node = *it;
        if (node->backward && !node->grad.empty()) {
            node->backward(*node);
        }
    }
    for (detail::Node<T>* node : order_) {
        if (node->backward) {
            node->backward = nullptr;
            node->inputs.clear();
            if (node != root_.get()) {
                std::vector<T>().swap(node->grad);
            }
        }
    }
    order_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class GradientTape<float>;
template class GradientTape<double>;

} // namespace webnn
