#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace smtc {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& shape);
std::int64_t numel(const Shape& shape);

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Violated call contract (non-scalar loss, non-binary target, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Precision : std::uint8_t { single = 0, double_ = 1 };

template <typename T>
constexpr Precision precision_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? Precision::single : Precision::double_;
}

// Dense row-major tensor. Slices and reshapes copy; there are no strided views.
template <typename T>
class Tensor {
    static_assert(std::is_floating_point_v<T>);

public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0));
    Tensor(Shape shape, std::vector<T> values);

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
    static Tensor from(std::initializer_list<std::int64_t> shape, std::initializer_list<T> values) {
        return Tensor(Shape(shape), std::vector<T>(values));
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int axis) const;
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() & { return data_; }
    std::span<const T> data() const& { return data_; }
    // Temporaries hand over their storage so range-for over them stays valid.
    std::vector<T> data() && { return std::move(data_); }
    std::vector<T>& storage() & { return data_; }
    const std::vector<T>& storage() const& { return data_; }
    std::vector<T> storage() && { return std::move(data_); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Matrix / NCHW accessors; no bounds checks beyond rank.
    T& at(std::int64_t i, std::int64_t j) { return data_[i * shape_[1] + j]; }
    const T& at(std::int64_t i, std::int64_t j) const { return data_[i * shape_[1] + j]; }
    T& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at(std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    T item() const;
    void fill(T v);
    Tensor reshaped(Shape shape) const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    bool all_finite() const;
    bool bitwise_equal(const Tensor& other) const;

private:
    Shape shape_;
    std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tensor<long double>;

} // namespace smtc
