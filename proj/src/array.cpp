#include "reseb/array.hpp"

#include <cmath>
#include <sstream>

namespace reseb {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_size(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

NumArray::NumArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || shape_.size() > 3) {
        throw DimensionError("NumArray rank must be 1..3, got shape " + shape_str(shape_));
    }
    for (auto e : shape_) {
        if (e <= 0) throw DimensionError("NumArray extents must be positive, got " + shape_str(shape_));
    }
    if (shape_size(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw DimensionError("NumArray data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }
}

NumArray NumArray::zeros(Shape shape) {
    auto n = shape_size(shape);
    return NumArray(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

NumArray NumArray::full(Shape shape, double v) {
    auto n = shape_size(shape);
    return NumArray(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v));
}

bool NumArray::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace reseb
