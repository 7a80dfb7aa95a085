#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace adarec {

// Input/config problems (bad file, bad flag value). CLI maps these to exit 2.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreements between operands.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values or solver breakdowns. CLI maps these to exit 4.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A required artifact from an earlier pipeline phase is missing. Exit 3.
struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles, rank 1..3. Values are expected to stay
// finite; ops call ensure_finite() and surface violations as NumericError.
class Tensor {
public:
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        validate_shape();
        data.assign(static_cast<size_t>(numel()), 0.0);
    }

    Tensor(std::vector<int> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        validate_shape();
        if (static_cast<long long>(data.size()) != numel()) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str());
        }
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vec(std::vector<double> d) {
        int n = static_cast<int>(d.size());
        return Tensor({n}, std::move(d));
    }

    int rank() const { return static_cast<int>(shape.size()); }

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    long long numel() const {
        long long n = 1;
        for (int s : shape) n *= s;
        return n;
    }

    bool is_scalar() const { return numel() == 1; }

    double& at(int i) { return data[static_cast<size_t>(i)]; }
    double at(int i) const { return data[static_cast<size_t>(i)]; }

    double& at(int i, int j) { return data[static_cast<size_t>(i) * dim(1) + j]; }
    double at(int i, int j) const { return data[static_cast<size_t>(i) * dim(1) + j]; }

    double& at(int i, int j, int k) {
        return data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double at(int i, int j, int k) const {
        return data[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            s += std::to_string(shape[i]);
            if (i + 1 < shape.size()) s += "x";
        }
        return s + "]";
    }

    void ensure_finite(const char* what) const {
        for (double v : data) {
            if (!std::isfinite(v)) {
                throw NumericError(std::string("non-finite value in ") + what);
            }
        }
    }

private:
    void validate_shape() const {
        if (shape.empty() || shape.size() > 3) {
            throw ShapeError("tensor rank must be 1..3, got rank " +
                             std::to_string(shape.size()));
        }
        for (int s : shape) {
            if (s <= 0) throw ShapeError("non-positive dimension in shape " + shape_str());
        }
    }
};

}  // namespace adarec
