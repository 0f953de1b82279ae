#pragma once

#include <cstring>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>

#include "pansharp/common.hpp"

namespace pansharp {

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor. A Tensor is a cheap handle onto shared storage:
// copies alias the same values, gradient buffer and requires-grad flag, so
// handles captured by the autograd tape and handles held by a model stay
// in sync. Ops never mutate input values; only gradient accumulation and
// optimizer updates write through existing handles.
template <typename T>
class Tensor {
    struct Storage {
        std::vector<T> data;
        std::vector<T> grad;  // empty until first requested
        bool requires_grad = false;
    };

public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        validate_shape();
        storage_ = std::make_shared<Storage>();
        storage_->data.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
    }

    Tensor(std::vector<int64_t> shape, std::vector<T> values) : shape_(std::move(shape)) {
        validate_shape();
        if (static_cast<int64_t>(values.size()) != shape_numel(shape_))
            throw DimensionError("tensor: value count " + std::to_string(values.size()) +
                                 " does not match shape " + shape_str(shape_));
        for (const T& v : values)
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError("tensor: non-finite value rejected at construction");
        storage_ = std::make_shared<Storage>();
        storage_->data = std::move(values);
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, T v) {
        Tensor t(std::move(shape));
        for (T& x : t.storage_->data) x = v;
        return t;
    }

    static Tensor scalar(T v) { return full({1}, v); }

    bool defined() const { return storage_ != nullptr; }
    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return storage_ ? static_cast<int64_t>(storage_->data.size()) : 0; }

    T* data() { return storage_->data.data(); }
    const T* data() const { return storage_->data.data(); }

    bool requires_grad() const { return storage_ && storage_->requires_grad; }
    Tensor& set_requires_grad(bool b) {
        storage_->requires_grad = b;
        return *this;
    }

    bool has_grad() const { return storage_ && !storage_->grad.empty(); }

    T* grad() {
        if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), T(0));
        return storage_->grad.data();
    }
    const T* grad_or_null() const { return has_grad() ? storage_->grad.data() : nullptr; }

    void zero_grad() {
        if (storage_ && !storage_->grad.empty())
            std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
    }

    T item() const {
        if (numel() != 1) throw UsageError("item: tensor is not a scalar");
        return storage_->data[0];
    }

    T& at(std::initializer_list<int64_t> idx) { return storage_->data[static_cast<size_t>(flat_index(idx))]; }
    T at(std::initializer_list<int64_t> idx) const {
        return storage_->data[static_cast<size_t>(flat_index(idx))];
    }

    // Deep copy with fresh storage; gradient state is not carried over.
    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.storage_ = std::make_shared<Storage>();
        t.storage_->data = storage_->data;
        t.storage_->requires_grad = storage_->requires_grad;
        return t;
    }

    // Same storage viewed under a compatible shape.
    Tensor reshaped(std::vector<int64_t> shape) const {
        if (shape_numel(shape) != numel())
            throw DimensionError("reshape: numel mismatch " + shape_str(shape_) + " -> " + shape_str(shape));
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    bool all_finite() const {
        for (const T& v : storage_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    void validate_shape() const {
        for (int64_t d : shape_)
            if (d <= 0) throw DimensionError("tensor: non-positive dimension in shape " + shape_str(shape_));
    }

    int64_t flat_index(std::initializer_list<int64_t> idx) const {
        if (static_cast<int>(idx.size()) != rank()) throw DimensionError("at: index rank mismatch");
        int64_t flat = 0;
        int i = 0;
        for (int64_t v : idx) {
            flat = flat * shape_[static_cast<size_t>(i)] + v;
            ++i;
        }
        return flat;
    }

    std::vector<int64_t> shape_;
    std::shared_ptr<Storage> storage_;
};

// Reverse-mode tape. Each op that touches a tensor requiring grad pushes
// one closure; backward() replays them in reverse recording order, which
// is a valid topological order by construction. Closures are released as
// soon as they have run so captured activations free up progressively.
template <typename T>
class Graph {
public:
    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

    size_t size() const { return steps_.size(); }

    void clear() { steps_.clear(); }

    void backward(Tensor<T>& loss) {
        if (loss.numel() != 1) throw UsageError("backward: loss must be a scalar");
        loss.grad()[0] += T(1);
        for (int64_t i = static_cast<int64_t>(steps_.size()) - 1; i >= 0; --i) {
            steps_[static_cast<size_t>(i)]();
            steps_[static_cast<size_t>(i)] = nullptr;
        }
        steps_.clear();
    }

private:
    std::vector<std::function<void()>> steps_;
};

template <typename T>
inline bool grad_wanted(const Graph<T>* g, const Tensor<T>& a) {
    return g != nullptr && a.requires_grad();
}

inline void check_same_shape(const std::vector<int64_t>& a, const std::vector<int64_t>& b, const char* what) {
    if (a != b)
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace pansharp
