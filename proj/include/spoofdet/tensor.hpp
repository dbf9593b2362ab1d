#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace spoofdet {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::runtime_error(msg);
}

/// Dense row-major n-d array of floats. Copies are shallow handles onto the
/// same storage; clone() detaches. A tensor may carry a node id on the
/// active Tape, which is how gradients find their way back to it.
template <typename T>
class Tensor {
  public:
    Tensor() : impl_(std::make_shared<Impl>()) {}

    explicit Tensor(Shape shape) : impl_(std::make_shared<Impl>()) {
        for (int64_t d : shape) check(d > 0, "Tensor: non-positive extent in " + shape_str(shape));
        impl_->shape = std::move(shape);
        impl_->data.assign(shape_numel(impl_->shape), T(0));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> data) {
        Tensor t;
        check(shape_numel(shape) == (int64_t)data.size(),
              "Tensor::from: " + std::to_string(data.size()) + " values for shape " + shape_str(shape));
        t.impl_->shape = std::move(shape);
        t.impl_->data = std::move(data);
        return t;
    }

    static Tensor scalar(T value) { return from({1}, {value}); }

    const Shape& shape() const { return impl_->shape; }
    int64_t dim(size_t i) const { return impl_->shape.at(i); }
    int64_t ndim() const { return (int64_t)impl_->shape.size(); }
    int64_t numel() const { return (int64_t)impl_->data.size(); }

    T* data() { return impl_->data.data(); }
    const T* data() const { return impl_->data.data(); }
    std::vector<T>& vec() { return impl_->data; }
    const std::vector<T>& vec() const { return impl_->data; }

    T item() const {
        check(numel() == 1, "Tensor::item: tensor has " + std::to_string(numel()) + " elements");
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    /// Deep copy with no grad flag and no tape linkage.
    Tensor clone() const {
        Tensor t;
        t.impl_->shape = impl_->shape;
        t.impl_->data = impl_->data;
        return t;
    }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    // Tape bookkeeping. A node id is only meaningful for the tape that
    // assigned it, so it is stored together with that tape's id.
    int64_t tape_node(uint64_t tape_id) const { return impl_->tape_id == tape_id ? impl_->node : -1; }
    void set_tape_node(uint64_t tape_id, int64_t node) const {
        impl_->tape_id = tape_id;
        impl_->node = node;
    }

  private:
    struct Impl {
        Shape shape;
        std::vector<T> data;
        bool requires_grad = false;
        uint64_t tape_id = 0;  // 0 is never a live tape id
        int64_t node = -1;
    };
    std::shared_ptr<Impl> impl_;
};

/// Reverse-mode tape. Operations append nodes in execution order, so the
/// record is topologically sorted by construction; backward() walks it once
/// in reverse. Gradients of nodes feeding several consumers accumulate by
/// summation. The most recently constructed Tape is the active one
/// (single-threaded use per tape).
template <typename T>
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, const std::vector<T>&)>;

    Tape() : id_(next_id()++) { stack().push_back(this); }
    ~Tape() { stack().pop_back(); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() { return stack().empty() ? nullptr : stack().back(); }

    uint64_t id() const { return id_; }
    int64_t size() const { return (int64_t)nodes_.size(); }

    /// True if an op involving this tensor must be recorded.
    bool tracked(const Tensor<T>& t) const { return t.requires_grad() || t.tape_node(id_) >= 0; }

    /// Node id of t, creating a leaf node if t requires grad but has none
    /// yet. Returns -1 for constants (no gradient path).
    int64_t node_for(const Tensor<T>& t) {
        int64_t n = t.tape_node(id_);
        if (n >= 0) return n;
        if (!t.requires_grad()) return -1;
        return watch(t);
    }

    /// Register t as a leaf (typically a parameter or input under test).
    int64_t watch(const Tensor<T>& t) {
        int64_t n = t.tape_node(id_);
        if (n >= 0) return n;
        nodes_.push_back(Node{{}, t.numel(), nullptr});
        grads_.emplace_back();
        t.set_tape_node(id_, (int64_t)nodes_.size() - 1);
        return (int64_t)nodes_.size() - 1;
    }

    int64_t add_node(std::vector<int64_t> parents, int64_t numel, BackwardFn fn) {
        for (int64_t p : parents)
            check(p < (int64_t)nodes_.size(), "Tape: parent node does not precede child");
        nodes_.push_back(Node{std::move(parents), numel, std::move(fn)});
        grads_.emplace_back();
        return (int64_t)nodes_.size() - 1;
    }

    /// Gradient buffer of a node, allocated (zeroed) on first touch.
    std::vector<T>& grad_buffer(int64_t node) {
        auto& g = grads_.at(node);
        if (g.empty()) g.assign(nodes_[node].numel, T(0));
        return g;
    }

    bool has_grad(int64_t node) const { return node >= 0 && !grads_.at(node).empty(); }

    /// Accumulate dLoss/dNode for every node reachable from `loss`.
    void backward(const Tensor<T>& loss) {
        check(loss.numel() == 1, "backward: loss must be scalar, got shape " + shape_str(loss.shape()));
        int64_t root = loss.tape_node(id_);
        check(root >= 0, "backward: loss is not on the active tape");
        grad_buffer(root).assign(1, T(1));
        for (int64_t i = root; i >= 0; --i) {
            if (grads_[i].empty() || !nodes_[i].backward) continue;
            nodes_[i].backward(*this, grads_[i]);
        }
    }

    /// Gradient of a watched tensor; zeros if nothing reached it.
    Tensor<T> grad(const Tensor<T>& t) const {
        int64_t n = t.tape_node(id_);
        check(n >= 0, "grad: tensor was never seen by this tape");
        Tensor<T> g(t.shape());
        if (!grads_[n].empty()) std::copy(grads_[n].begin(), grads_[n].end(), g.data());
        return g;
    }

    const std::vector<int64_t>& parents(int64_t node) const { return nodes_.at(node).parents; }

  private:
    struct Node {
        std::vector<int64_t> parents;
        int64_t numel;
        BackwardFn backward;  // null for leaves
    };

    static std::vector<Tape*>& stack() {
        thread_local std::vector<Tape*> s;
        return s;
    }
    static uint64_t& next_id() {
        thread_local uint64_t id = 1;
        return id;
    }

    uint64_t id_;
    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;
};

#ifndef NDEBUG
#define SPOOFDET_CHECK_FINITE 1
#endif

template <typename T>
inline void check_finite(const Tensor<T>& t, const char* where) {
#ifdef SPOOFDET_CHECK_FINITE
    for (int64_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(t.data()[i]))
            throw std::runtime_error(std::string(where) + ": non-finite value in output");
#else
    (void)t;
    (void)where;
#endif
}

}  // namespace spoofdet
