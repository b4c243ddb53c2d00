#include "ratlab/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ratlab {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape_));
    return data_[0];
}

std::size_t Tensor::row_size() const {
    return shape_.empty() ? 1 : data_.size() / std::max<std::size_t>(shape_[0], 1);
}

std::span<double> Tensor::row(std::size_t r) {
    const std::size_t n = row_size();
    return std::span<double>(data_).subspan(r * n, n);
}

std::span<const double> Tensor::row(std::size_t r) const {
    const std::size_t n = row_size();
    return std::span<const double>(data_).subspan(r * n, n);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor operator*(const Tensor& a, double s) {
    Tensor out = a;
    for (auto& v : out.data()) v *= s;
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n, bool trans_a, bool trans_b,
          bool accumulate) {
    if (!accumulate) std::fill(c.begin(), c.end(), 0.0);
    // a is m x k (or k x m when transposed); b is k x n (or n x k).
    if (!trans_b) {
        for (std::size_t i = 0; i < m; ++i) {
            double* ci = c.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = trans_a ? a[p * m + i] : a[i * k + p];
                if (aip == 0.0) continue;
                const double* bp = b.data() + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double* bj = b.data() + j * k;
                double s = 0.0;
                if (trans_a) {
                    for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * bj[p];
                } else {
                    const double* ai = a.data() + i * k;
                    for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
                }
                c[i * n + j] += s;
            }
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Tensor c(Shape{a.dim(0), b.dim(1)});
    gemm(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

Tensor concat_rows(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    Shape shape = parts.front()->shape();
    if (shape.empty()) throw ShapeError("concat_rows: rank-0 input");
    std::size_t rows = 0;
    for (const Tensor* p : parts) {
        if (p->rank() != shape.size() ||
            !std::equal(shape.begin() + 1, shape.end(), p->shape().begin() + 1)) {
            throw ShapeError("concat_rows: " + shape_str(shape) + " vs " + shape_str(p->shape()));
        }
        rows += p->dim(0);
    }
    shape[0] = rows;
    std::vector<double> data;
    data.reserve(shape_numel(shape));
    for (const Tensor* p : parts) data.insert(data.end(), p->data().begin(), p->data().end());
    return Tensor(std::move(shape), std::move(data));
}

Tensor take_rows(const Tensor& t, std::span<const std::size_t> idx) {
    Shape shape = t.shape();
    if (shape.empty()) throw ShapeError("take_rows: rank-0 input");
    shape[0] = idx.size();
    Tensor out(shape);
    const std::size_t n = t.row_size();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= t.dim(0)) throw ShapeError("take_rows: index out of range");
        std::copy_n(t.row(idx[i]).begin(), n, out.data().begin() + i * n);
    }
    return out;
}

// --- binary format -------------------------------------------------------

namespace {

constexpr std::array<char, 4> kMagic{'R', 'A', 'T', 'T'};

template <typename T>
void put_le(std::ostream& os, T v) {
    std::array<unsigned char, sizeof(T)> buf{};
    std::memcpy(buf.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    os.write(reinterpret_cast<const char*>(buf.data()), buf.size());
}

template <typename T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> buf{};
    if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
        throw std::runtime_error("tensor file: truncated");
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    T v;
    std::memcpy(&v, buf.data(), sizeof(T));
    return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    if (t.rank() > 255) throw ShapeError("tensor file: rank exceeds 255");
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint8_t>(os, kTensorFileVersion);
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t e : t.shape()) put_le<std::uint64_t>(os, e);
    for (double v : t.data()) put_le<double>(os, v);
}

Tensor read_tensor(std::istream& is) {
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
        throw std::runtime_error("tensor file: bad magic");
    }
    const auto version = get_le<std::uint8_t>(is);
    if (version != kTensorFileVersion) {
        throw std::runtime_error("tensor file: unsupported version " + std::to_string(version));
    }
    const auto rank = get_le<std::uint8_t>(is);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(get_le<std::uint64_t>(is));
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = get_le<double>(is);
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) { save_tensors(path, {t}); }

Tensor load_tensor(const std::string& path) {
    auto ts = load_tensors(path);
    if (ts.size() != 1) {
        throw std::runtime_error(path + ": expected one tensor, found " + std::to_string(ts.size()));
    }
    return std::move(ts.front());
}

void save_tensors(const std::string& path, const std::vector<Tensor>& ts) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& t : ts) write_tensor(os, t);
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::vector<Tensor> load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::vector<Tensor> out;
    while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(is));
    return out;
}

// --- CSV -----------------------------------------------------------------

void write_csv(std::ostream& os, const Tensor& m) {
    const std::size_t rows = m.rank() == 0 ? 1 : m.dim(0);
    const std::size_t cols = m.row_size();
    std::array<char, 32> buf{};
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c) os << ',';
            auto res = std::to_chars(buf.data(), buf.data() + buf.size(), m[r * cols + c]);
            os.write(buf.data(), res.ptr - buf.data());
        }
        os << '\n';
    }
}

Tensor read_csv(std::istream& is) {
    std::vector<double> data;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t n = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p <= end) {
            const char* comma = std::find(p, end, ',');
            double v = 0.0;
            auto res = std::from_chars(p, comma, v);
            if (res.ec != std::errc() || res.ptr != comma) {
                throw std::runtime_error("csv: bad number on line " + std::to_string(rows + 1));
            }
            data.push_back(v);
            ++n;
            p = comma + 1;
        }
        if (rows == 0) cols = n;
        if (n != cols) throw std::runtime_error("csv: ragged row " + std::to_string(rows + 1));
        ++rows;
    }
    return Tensor(Shape{rows, cols}, std::move(data));
}

}  // namespace ratlab
