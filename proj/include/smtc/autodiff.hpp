#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "smtc/tensor.hpp"

namespace smtc {

enum class ParamGroup { trunk, collateral, isrm, decoder };

const char* to_string(ParamGroup g);

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    ParamGroup group = ParamGroup::trunk;
};

// Ordered, name-addressed parameter table. Indices are stable for the
// lifetime of the store, so layers refer to their weights by index.
template <typename T>
class ParameterStore {
public:
    std::size_t add(std::string name, Tensor<T> value, ParamGroup group);

    std::size_t size() const { return params_.size(); }
    Parameter<T>& operator[](std::size_t i) { return params_[i]; }
    const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
    std::optional<std::size_t> find(const std::string& name) const;
    Parameter<T>& at(const std::string& name);
    const Parameter<T>& at(const std::string& name) const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::int64_t count(ParamGroup group) const;
    std::int64_t count() const;

private:
    std::vector<Parameter<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
class Var {
public:
    Var() = default;
    Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
    std::int64_t dim(int axis) const { return value().dim(axis); }
    int rank() const { return value().rank(); }
    bool requires_grad() const;

    Tape<T>* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape<T>* tape_ = nullptr;
    int id_ = -1;
};

// Append-only record of a forward pass. Records are topologically ordered by
// construction; backward walks them once in reverse.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

    explicit Tape(ParameterStore<T>* params = nullptr);
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> constant(Tensor<T> value);
    Var<T> input(Tensor<T> value);
    Var<T> param(std::size_t index);
    Var<T> param(const std::string& name);

    // Records an op output. The backward closure is dropped when no input needs a gradient.
    Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn, const char* op);

    const Tensor<T>& value(int id) const { return nodes_[id].value; }
    bool requires_grad(int id) const { return nodes_[id].requires_grad; }
    const char* op(int id) const { return nodes_[id].op; }
    const std::vector<int>& inputs(int id) const { return nodes_[id].inputs; }

    void accumulate(int id, const Tensor<T>& g);
    void accumulate(int id, Tensor<T>&& g);

    void backward(Var<T> loss);

    Tensor<T> grad(Var<T> v) const;
    // One entry per store parameter; zeros for parameters the loss never reached.
    std::vector<Tensor<T>> param_grads() const;

    std::size_t size() const { return nodes_.size(); }
    std::size_t backward_visits() const { return visits_; }
    void set_grad_enabled(bool on) { grad_enabled_ = on; }
    bool grad_enabled() const { return grad_enabled_; }
    ParameterStore<T>* params() const { return params_; }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        std::vector<int> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        bool has_grad = false;
        const char* op = "";
    };

    Var<T> push(Node node);

    std::deque<Node> nodes_;
    ParameterStore<T>* params_;
    std::vector<int> param_nodes_;
    bool grad_enabled_ = true;
    bool done_ = false;
    std::size_t visits_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
    return tape_->requires_grad(id_);
}

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;
extern template class ParameterStore<long double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class Tape<long double>;

} // namespace smtc
