#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ratlab {

using Shape = std::vector<std::size_t>;

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of doubles. A value type: copies are deep.
class Tensor {
public:
    Tensor() = default;  // rank-0, one element
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const;
    bool is_scalar() const { return data_.size() == 1; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_.at(1) + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_.at(1) + c]; }
    double item() const;

    std::span<double> row(std::size_t r);
    std::span<const double> row(std::size_t r) const;
    std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
    std::size_t row_size() const;

    Tensor reshaped(Shape shape) const;
    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_{};
    std::vector<double> data_{0.0};
};

// Plain (non-recording) helpers used by optimizers and preprocessing.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double max_abs(std::span<const double> a);

// C = A(m x k) * B(k x n), with optional transposition of either operand.
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool trans_a = false,
          bool trans_b = false, bool accumulate = false);
Tensor matmul(const Tensor& a, const Tensor& b);

// Rows stacked along axis 0; all inputs must share trailing extents.
Tensor concat_rows(const std::vector<const Tensor*>& parts);
Tensor take_rows(const Tensor& t, std::span<const std::size_t> idx);

// "RATT" binary interchange: magic, u8 version, u8 rank, u64 LE extents, f64 LE payload.
inline constexpr unsigned char kTensorFileVersion = 1;
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);
// Several records back to back in one file (parameter snapshots).
void save_tensors(const std::string& path, const std::vector<Tensor>& ts);
std::vector<Tensor> load_tensors(const std::string& path);

// Matrix CSV: one row per line, ',' separator, '.' decimal, round-trip precision.
void write_csv(std::ostream& os, const Tensor& m);
Tensor read_csv(std::istream& is);

}  // namespace ratlab
