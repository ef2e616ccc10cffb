#include "smtc/autodiff.hpp"

namespace smtc {

const char* to_string(ParamGroup g) {
    switch (g) {
    case ParamGroup::trunk: return "trunk";
    case ParamGroup::collateral: return "collateral";
    case ParamGroup::isrm: return "isrm";
    case ParamGroup::decoder: return "decoder";
    }
    return "?";
}

template <typename T>
std::size_t ParameterStore<T>::add(std::string name, Tensor<T> value, ParamGroup group) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    const std::size_t i = params_.size();
    index_.emplace(name, i);
    params_.push_back({std::move(name), std::move(value), group});
    return i;
}

template <typename T>
std::optional<std::size_t> ParameterStore<T>::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(const std::string& name) {
    auto i = find(name);
    if (!i) throw ConfigError("unknown parameter '" + name + "'");
    return params_[*i];
}

template <typename T>
const Parameter<T>& ParameterStore<T>::at(const std::string& name) const {
    auto i = find(name);
    if (!i) throw ConfigError("unknown parameter '" + name + "'");
    return params_[*i];
}

template <typename T>
std::int64_t ParameterStore<T>::count(ParamGroup group) const {
    std::int64_t n = 0;
    for (const auto& p : params_)
        if (p.group == group) n += static_cast<std::int64_t>(p.value.size());
    return n;
}

template <typename T>
std::int64_t ParameterStore<T>::count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += static_cast<std::int64_t>(p.value.size());
    return n;
}

template <typename T>
Tape<T>::Tape(ParameterStore<T>* params) : params_(params) {
    if (params_) param_nodes_.assign(params_->size(), -1);
}

template <typename T>
Var<T> Tape<T>::push(Node node) {
    if (done_) throw ContractError("tape already consumed by backward()");
    nodes_.push_back(std::move(node));
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    Node n;
    n.value = std::move(value);
    n.op = "constant";
    return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::input(Tensor<T> value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_;
    n.op = "input";
    return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::param(std::size_t index) {
    if (!params_ || index >= params_->size()) throw ContractError("tape has no parameter #" + std::to_string(index));
    if (param_nodes_.size() < params_->size()) param_nodes_.resize(params_->size(), -1);
    if (param_nodes_[index] >= 0) return Var<T>(this, param_nodes_[index]);
    Node n;
    n.value = (*params_)[index].value;
    n.requires_grad = grad_enabled_;
    n.op = "param";
    Var<T> v = push(std::move(n));
    param_nodes_[index] = v.id();
    return v;
}

template <typename T>
Var<T> Tape<T>::param(const std::string& name) {
    if (!params_) throw ContractError("tape has no parameter store");
    auto i = params_->find(name);
    if (!i) throw ConfigError("unknown parameter '" + name + "'");
    return param(*i);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn fn, const char* op) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    bool needs = false;
    for (const auto& v : inputs) {
        if (v.tape() != this) throw ContractError(std::string("op '") + op + "' mixes values from different tapes");
        n.inputs.push_back(v.id());
        needs = needs || nodes_[v.id()].requires_grad;
    }
    n.requires_grad = needs && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(fn);
    return push(std::move(n));
}

template <typename T>
void Tape<T>::accumulate(int id, const Tensor<T>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (g.shape() != n.value.shape()) {
        throw DimensionError(std::string("gradient shape ") + shape_str(g.shape()) + " does not match value shape " +
                             shape_str(n.value.shape()) + " at op '" + n.op + "'");
    }
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
        return;
    }
    auto dst = n.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::accumulate(int id, Tensor<T>&& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad && g.shape() == n.value.shape()) {
        n.grad = std::move(g);
        n.has_grad = true;
        return;
    }
    accumulate(id, static_cast<const Tensor<T>&>(g));
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
    if (nodes_[loss.id()].value.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(nodes_[loss.id()].value.shape()));
    }
    if (done_) throw ContractError("backward called twice on one tape");
    done_ = true;
    accumulate(loss.id(), Tensor<T>(nodes_[loss.id()].value.shape(), T(1)));
    for (int id = loss.id(); id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.has_grad || !n.backward) continue;
        ++visits_;
        n.backward(*this, n.grad);
        n.backward = nullptr;
    }
}

template <typename T>
Tensor<T> Tape<T>::grad(Var<T> v) const {
    const Node& n = nodes_[v.id()];
    if (n.has_grad) return n.grad;
    return Tensor<T>(n.value.shape());
}

template <typename T>
std::vector<Tensor<T>> Tape<T>::param_grads() const {
    std::vector<Tensor<T>> out;
    if (!params_) return out;
    out.reserve(params_->size());
    for (std::size_t i = 0; i < params_->size(); ++i) {
        const int id = i < param_nodes_.size() ? param_nodes_[i] : -1;
        if (id >= 0 && nodes_[id].has_grad)
            out.push_back(nodes_[id].grad);
        else
            out.emplace_back((*params_)[i].value.shape());
    }
    return out;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class ParameterStore<long double>;
template class Tape<float>;
template class Tape<double>;
template class Tape<long double>;

} // namespace smtc
