#include "stmre/layers.hpp"

#include <cmath>
#include <map>

namespace stmre {

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t stride, std::size_t padding)
    : weight(leaf(TensorT<T>::zeros({out_channels, in_channels, kernel, kernel}), true)),
      bias(leaf(TensorT<T>::zeros({out_channels}), true)),
      name_(std::move(name)),
      stride_(stride),
      padding_(padding) {}

template <typename T>
Conv2d<T> Conv2d<T>::same(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel) {
    if (kernel % 2 == 0) throw ConfigError("same-padded convolution needs an odd kernel, got " + std::to_string(kernel));
    return Conv2d(std::move(name), in_channels, out_channels, kernel, 1, kernel / 2);
}

template <typename T>
void Conv2d<T>::collect(std::vector<NamedParam<T>>& out) const {
    out.push_back({name_ + ".weight", weight});
    out.push_back({name_ + ".bias", bias});
}

template <typename T>
Linear<T>::Linear(std::string name, std::size_t in_features, std::size_t out_features)
    : weight(leaf(TensorT<T>::zeros({out_features, in_features}), true)),
      bias(leaf(TensorT<T>::zeros({out_features}), true)),
      name_(std::move(name)) {}

template <typename T>
void Linear<T>::collect(std::vector<NamedParam<T>>& out) const {
    out.push_back({name_ + ".weight", weight});
    out.push_back({name_ + ".bias", bias});
}

template <typename T>
std::vector<NamedParam<T>> Classifier<T>::trainable_parameters() const {
    std::vector<NamedParam<T>> out;
    for (auto& p : parameters()) {
        if (p.var->requires_grad) out.push_back(p);
    }
    return out;
}

template <typename T>
std::size_t Classifier<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.var->value.numel();
    return n;
}

template <typename T>
void init_he_normal(const std::vector<NamedParam<T>>& params, std::uint64_t seed) {
    Rng rng(seed);
    for (const auto& p : params) {
        auto& value = p.var->value;
        if (value.rank() == 1) {
            value.fill(T{0});
            continue;
        }
        const std::size_t fan_in = value.numel() / value.dim(0);
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (auto& v : value.values()) v = static_cast<T>(rng.normal(0.0, stddev));
    }
}

template <typename T>
void set_trainable(const std::vector<NamedParam<T>>& params, bool trainable) {
    for (const auto& p : params) {
        p.var->requires_grad = trainable;
        if (trainable) {
            p.var->ensure_grad().fill(T{0});
        } else {
            p.var->grad = TensorT<T>();
        }
    }
}

template <typename T>
void copy_parameter_values(const std::vector<NamedParam<T>>& dst, const std::vector<NamedParam<T>>& src) {
    std::map<std::string, const Var<T>*> by_name;
    for (const auto& p : src) by_name[p.name] = &p.var;
    for (const auto& p : dst) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) throw ArgumentError("parameter " + p.name + " missing from source");
        const auto& from = (*it->second)->value;
        if (from.shape() != p.var->value.shape()) {
            throw DimensionError("parameter " + p.name + " shape " + shape_str(from.shape()) + " != " +
                                 shape_str(p.var->value.shape()));
        }
        p.var->value = from;
    }
}

template <typename T>
std::vector<TensorT<T>> snapshot(const std::vector<NamedParam<T>>& params) {
    std::vector<TensorT<T>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.var->value);
    return out;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class Linear<float>;
template class Linear<double>;
template class Classifier<float>;
template class Classifier<double>;
template void init_he_normal(const std::vector<NamedParam<float>>&, std::uint64_t);
template void init_he_normal(const std::vector<NamedParam<double>>&, std::uint64_t);
template void set_trainable(const std::vector<NamedParam<float>>&, bool);
template void set_trainable(const std::vector<NamedParam<double>>&, bool);
template void copy_parameter_values(const std::vector<NamedParam<float>>&, const std::vector<NamedParam<float>>&);
template void copy_parameter_values(const std::vector<NamedParam<double>>&, const std::vector<NamedParam<double>>&);
template std::vector<TensorT<float>> snapshot(const std::vector<NamedParam<float>>&);
template std::vector<TensorT<double>> snapshot(const std::vector<NamedParam<double>>&);

}  // namespace stmre
