#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "iagc/errors.hpp"

namespace iagc {

// Every operation the compute graph can record. Kinds are kept on the node
// so a recorded graph can be audited for which math it performs.
enum class OpKind : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Ln,
    Exp,
    Sqrt,
    Sigmoid,
    Relu,
    Gelu,
    Scale,
    PowerInt,
    Clamp,
    Matmul,
    Conv2d,
    Softmax,
    LayerNorm,
    GlobalAvgPool,
    SumAll,
    Gather,
    Reshape,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Ln: return "ln";
        case OpKind::Exp: return "exp";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Relu: return "relu";
        case OpKind::Gelu: return "gelu";
        case OpKind::Scale: return "scale";
        case OpKind::PowerInt: return "power_int";
        case OpKind::Clamp: return "clamp";
        case OpKind::Matmul: return "matmul";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Softmax: return "softmax";
        case OpKind::LayerNorm: return "layernorm";
        case OpKind::GlobalAvgPool: return "global_avg_pool";
        case OpKind::SumAll: return "sum_all";
        case OpKind::Gather: return "gather";
        case OpKind::Reshape: return "reshape";
    }
    return "?";
}

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

template <class T>
struct Node {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;  // empty until backward touches this node

    OpKind op = OpKind::Leaf;
    std::vector<std::shared_ptr<Node<T>>> inputs;
    // Distributes this node's grad into its inputs' grad buffers.
    std::function<void(Node<T>&)> backward_fn;

    std::size_t numel() const { return data.size(); }
    bool is_leaf() const { return op == OpKind::Leaf; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
};

// Per-thread switch that makes ops produce detached results (no graph links,
// no backward closures). Used for inference passes.
inline bool& grad_recording_flag() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_recording_flag()) { grad_recording_flag() = false; }
    ~NoGradGuard() { grad_recording_flag() = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Value-semantic handle onto a graph node. Copies share the node.
template <class T>
class BasicTensor {
public:
    using Scalar = T;

    BasicTensor() = default;
    explicit BasicTensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    static BasicTensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
        validate_shape(shape);
        if (iagc::numel(shape) != data.size())
            throw ShapeError("from_data: shape " + shape_str(shape) + " does not match data length " +
                             std::to_string(data.size()));
        auto n = std::make_shared<Node<T>>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        return BasicTensor(std::move(n));
    }

    static void validate_shape(const Shape& shape) {
        if (shape.empty()) throw InvalidShape("shape must be non-empty");
        for (std::size_t d : shape)
            if (d == 0) throw InvalidShape("shape has zero extent: " + shape_str(shape));
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->data.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape[i]; }
    std::size_t rank() const { return node_->shape.size(); }

    const std::vector<T>& data() const { return node_->data; }
    std::vector<T>& data() { return node_->data; }
    T operator[](std::size_t i) const { return node_->data[i]; }
    T& operator[](std::size_t i) { return node_->data[i]; }

    T at(std::initializer_list<std::size_t> idx) const {
        return node_->data[flat_index(idx)];
    }

    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != rank()) throw ShapeError("index rank mismatch");
        std::size_t flat = 0, k = 0;
        for (std::size_t i : idx) {
            if (i >= node_->shape[k]) throw ShapeError("index out of bounds");
            flat = flat * node_->shape[k] + i;
            ++k;
        }
        return flat;
    }

    bool requires_grad() const { return node_->requires_grad; }
    BasicTensor& set_requires_grad(bool v) {
        node_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<T>& grad() const {
        if (node_->grad.empty()) throw Error("tensor has no gradient; run backward first");
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    }

    OpKind op() const { return node_->op; }
    const std::shared_ptr<Node<T>>& node() const { return node_; }

    // Copy of values as a fresh leaf, cut from the graph.
    BasicTensor detach() const {
        return from_data(node_->shape, node_->data, false);
    }

private:
    std::shared_ptr<Node<T>> node_;
};

using TensorF = BasicTensor<float>;
using TensorD = BasicTensor<double>;
using Tensor = TensorF;

// ---- creation ----

struct Init {
    enum class Kind { Zero, One, Constant, Uniform, Normal } kind = Kind::Zero;
    double a = 0.0, b = 0.0;  // constant c; uniform lo/hi; normal mu/sigma
    std::uint64_t seed = 0;
};

inline Init init_zero() { return Init{Init::Kind::Zero, 0, 0, 0}; }
inline Init init_one() { return Init{Init::Kind::One, 0, 0, 0}; }
inline Init init_constant(double c) { return Init{Init::Kind::Constant, c, 0, 0}; }
inline Init init_uniform(double lo, double hi, std::uint64_t seed) {
    return Init{Init::Kind::Uniform, lo, hi, seed};
}
inline Init init_normal(double mu, double sigma, std::uint64_t seed) {
    return Init{Init::Kind::Normal, mu, sigma, seed};
}

template <class T>
BasicTensor<T> create(Shape shape, const Init& init, bool requires_grad = false) {
    BasicTensor<T>::validate_shape(shape);
    std::vector<T> data(numel(shape));
    switch (init.kind) {
        case Init::Kind::Zero:
            break;
        case Init::Kind::One:
            std::fill(data.begin(), data.end(), T(1));
            break;
        case Init::Kind::Constant:
            std::fill(data.begin(), data.end(), static_cast<T>(init.a));
            break;
        case Init::Kind::Uniform: {
            if (!(init.a < init.b)) throw Error("uniform init requires lo < hi");
            std::mt19937_64 rng(init.seed);
            std::uniform_real_distribution<T> dist(static_cast<T>(init.a), static_cast<T>(init.b));
            for (auto& v : data) v = dist(rng);
            break;
        }
        case Init::Kind::Normal: {
            std::mt19937_64 rng(init.seed);
            std::normal_distribution<T> dist(static_cast<T>(init.a), static_cast<T>(init.b));
            for (auto& v : data) v = dist(rng);
            break;
        }
    }
    return BasicTensor<T>::from_data(std::move(shape), std::move(data), requires_grad);
}

template <class T>
BasicTensor<T> scalar_tensor(T v, bool requires_grad = false) {
    return BasicTensor<T>::from_data({1}, {v}, requires_grad);
}

// ---- op-node construction ----

template <class T>
BasicTensor<T> make_op(OpKind op, Shape shape, std::vector<T> data,
                       std::initializer_list<BasicTensor<T>> inputs,
                       std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->op = op;
    bool any_grad = false;
    for (const auto& in : inputs) any_grad = any_grad || in.requires_grad();
    if (any_grad && grad_recording_flag()) {
        n->requires_grad = true;
        n->inputs.reserve(inputs.size());
        for (const auto& in : inputs) n->inputs.push_back(in.node());
        n->backward_fn = std::move(backward_fn);
    }
    return BasicTensor<T>(std::move(n));
}

// ---- backward ----

// Reverse-mode sweep from a scalar loss. Gradients of leaf tensors
// accumulate across calls; interior node gradients are reset per call.
template <class T>
void backward(const BasicTensor<T>& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS: topological order with each node once.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* in = node->inputs[next].get();
            ++next;
            if (in->requires_grad && visited.insert(in).second) stack.emplace_back(in, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node<T>* n : order) {
        if (n->is_leaf()) {
            n->ensure_grad();  // persists across calls
        } else {
            n->grad.assign(n->data.size(), T(0));
        }
    }
    loss.node()->grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (n->backward_fn) {
            for (auto& in : n->inputs)
                if (in->requires_grad) in->ensure_grad();
            n->backward_fn(*n);
        }
    }
}

// All op kinds reachable from `t` through the recorded graph.
template <class T>
std::unordered_set<OpKind> collect_op_kinds(const BasicTensor<T>& t) {
    std::unordered_set<OpKind> kinds;
    std::unordered_set<Node<T>*> visited;
    std::vector<Node<T>*> stack{t.node().get()};
    while (!stack.empty()) {
        Node<T>* n = stack.back();
        stack.pop_back();
        if (!visited.insert(n).second) continue;
        kinds.insert(n->op);
        for (auto& in : n->inputs) stack.push_back(in.get());
    }
    return kinds;
}

// ---- parameter store ----

// Named trainable tensors; iteration order is insertion order.
template <class T>
class ParamStore {
public:
    void add(const std::string& name, BasicTensor<T> t) {
        if (index_.count(name)) throw Error("duplicate parameter name: " + name);
        t.set_requires_grad(true);
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(t));
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    BasicTensor<T>& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("no such parameter: " + name);
        return entries_[it->second].second;
    }
    const BasicTensor<T>& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("no such parameter: " + name);
        return entries_[it->second].second;
    }

    std::size_t size() const { return entries_.size(); }
    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.second.numel();
        return n;
    }

    void zero_grad() {
        for (auto& e : entries_) e.second.zero_grad();
    }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::vector<std::pair<std::string, BasicTensor<T>>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

using ParamStoreF = ParamStore<float>;
using ParamStoreD = ParamStore<double>;

}  // namespace iagc
