#include "vistr/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <numeric>

namespace vistr {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& dims) {
  if (dims.empty()) throw DataError("tensor must have order >= 1");
  std::size_t p = 1;
  for (std::size_t d : dims) {
    if (d < 1) throw DataError("tensor extents must be >= 1");
    p *= d;
  }
  return p;
}

// Row-major strides: last index fastest.
std::vector<std::size_t> row_major_strides(const std::vector<std::size_t>& dims) {
  std::vector<std::size_t> s(dims.size());
  std::size_t acc = 1;
  for (std::size_t k = dims.size(); k-- > 0;) {
    s[k] = acc;
    acc *= dims[k];
  }
  return s;
}

}  // namespace

DenseTensor::DenseTensor(std::vector<std::size_t> dims)
    : dims_(std::move(dims)), data_(checked_product(dims_), 0.0) {}

DenseTensor::DenseTensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (data_.size() != checked_product(dims_))
    throw DataError("tensor data length does not match product of extents");
}

DenseTensor DenseTensor::from_matrix(const Matrix& m) {
  DenseTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      t.data_[static_cast<std::size_t>(i) * m.cols() + j] = m(i, j);
  return t;
}

DenseTensor DenseTensor::from_vector(const Vector& v) {
  DenseTensor t({static_cast<std::size_t>(v.size())});
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data_[static_cast<std::size_t>(i)] = v(i);
  return t;
}

std::size_t DenseTensor::offset(const std::vector<std::size_t>& idx) const {
  if (idx.size() != dims_.size()) throw DataError("index order mismatch");
  std::size_t off = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] >= dims_[k]) throw DataError("index out of range");
    off = off * dims_[k] + idx[k];
  }
  return off;
}

Matrix DenseTensor::as_matrix() const {
  if (order() != 2) throw DataError("as_matrix requires an order-2 tensor");
  Matrix m(dims_[0], dims_[1]);
  for (std::size_t i = 0; i < dims_[0]; ++i)
    for (std::size_t j = 0; j < dims_[1]; ++j) m(i, j) = data_[i * dims_[1] + j];
  return m;
}

Vector DenseTensor::as_eigen_vector() const {
  if (order() != 1) throw DataError("as_eigen_vector requires an order-1 tensor");
  return Eigen::Map<const Vector>(data_.data(), static_cast<Eigen::Index>(data_.size()));
}

void DenseTensor::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

Matrix mode_unfold(const DenseTensor& x, std::size_t n) {
  const auto& dims = x.dims();
  if (n >= dims.size()) throw DataError("unfold mode out of range");
  const std::size_t rows = dims[n];
  const std::size_t cols = x.size() / rows;
  // Column index: remaining modes with the lowest-numbered one varying fastest.
  std::vector<std::size_t> rem;
  for (std::size_t m = 0; m < dims.size(); ++m)
    if (m != n) rem.push_back(m);
  std::vector<std::size_t> col_stride(dims.size(), 0);
  {
    std::size_t acc = 1;
    for (std::size_t m : rem) {
      col_stride[m] = acc;
      acc *= dims[m];
    }
  }
  Matrix out(rows, cols);
  const auto strides = row_major_strides(dims);
  std::vector<std::size_t> idx(dims.size(), 0);
  const double* src = x.data();
  for (std::size_t lin = 0; lin < x.size(); ++lin) {
    std::size_t c = 0;
    for (std::size_t m : rem) c += idx[m] * col_stride[m];
    out(static_cast<Eigen::Index>(idx[n]), static_cast<Eigen::Index>(c)) = src[lin];
    for (std::size_t k = dims.size(); k-- > 0;) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
  (void)strides;
  return out;
}

DenseTensor mode_fold(const Matrix& m, std::size_t n, const std::vector<std::size_t>& dims) {
  if (n >= dims.size()) throw DataError("fold mode out of range");
  DenseTensor out(dims);
  if (static_cast<std::size_t>(m.rows()) != dims[n] ||
      static_cast<std::size_t>(m.cols()) != out.size() / dims[n])
    throw DataError("fold shape mismatch");
  std::vector<std::size_t> rem;
  for (std::size_t k = 0; k < dims.size(); ++k)
    if (k != n) rem.push_back(k);
  std::vector<std::size_t> col_stride(dims.size(), 0);
  {
    std::size_t acc = 1;
    for (std::size_t k : rem) {
      col_stride[k] = acc;
      acc *= dims[k];
    }
  }
  std::vector<std::size_t> idx(dims.size(), 0);
  double* dst = out.data();
  for (std::size_t lin = 0; lin < out.size(); ++lin) {
    std::size_t c = 0;
    for (std::size_t k : rem) c += idx[k] * col_stride[k];
    dst[lin] = m(static_cast<Eigen::Index>(idx[n]), static_cast<Eigen::Index>(c));
    for (std::size_t k = dims.size(); k-- > 0;) {
      if (++idx[k] < dims[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

DenseTensor mode_mul(const DenseTensor& x, const Matrix& u, std::size_t n) {
  const auto& dims = x.dims();
  if (n >= dims.size()) throw DataError("mode_mul mode out of range");
  if (static_cast<std::size_t>(u.cols()) != dims[n])
    throw DataError("mode_mul dimension mismatch: matrix has " + std::to_string(u.cols()) +
                    " columns, mode extent is " + std::to_string(dims[n]));
  Matrix unf = mode_unfold(x, n);
  Matrix prod = u * unf;
  auto new_dims = dims;
  new_dims[n] = static_cast<std::size_t>(u.rows());
  return mode_fold(prod, n, new_dims);
}

DenseTensor vec_mul(const DenseTensor& x, const Vector& y, std::size_t n) {
  const auto& dims = x.dims();
  if (n >= dims.size()) throw DataError("vec_mul mode out of range");
  if (static_cast<std::size_t>(y.size()) != dims[n])
    throw DataError("vec_mul dimension mismatch");
  if (dims.size() == 1) {
    // Full contraction to a scalar tensor of order 1, extent 1.
    double s = 0;
    for (std::size_t i = 0; i < dims[0]; ++i) s += x[i] * y(static_cast<Eigen::Index>(i));
    return DenseTensor({1}, {s});
  }
  Matrix unf = mode_unfold(x, n);
  Vector row = unf.transpose() * y;  // length = prod of remaining extents
  std::vector<std::size_t> rem_dims;
  for (std::size_t m = 0; m < dims.size(); ++m)
    if (m != n) rem_dims.push_back(dims[m]);
  // Columns of the unfolding enumerate remaining modes lowest-first-fastest;
  // refold into row-major (last fastest) over the remaining modes.
  DenseTensor out(rem_dims);
  std::vector<std::size_t> idx(rem_dims.size(), 0);
  std::vector<std::size_t> col_stride(rem_dims.size());
  {
    std::size_t acc = 1;
    for (std::size_t k = 0; k < rem_dims.size(); ++k) {
      col_stride[k] = acc;
      acc *= rem_dims[k];
    }
  }
  for (std::size_t lin = 0; lin < out.size(); ++lin) {
    std::size_t c = 0;
    for (std::size_t k = 0; k < rem_dims.size(); ++k) c += idx[k] * col_stride[k];
    out[lin] = row(static_cast<Eigen::Index>(c));
    for (std::size_t k = rem_dims.size(); k-- > 0;) {
      if (++idx[k] < rem_dims[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

double inner(const DenseTensor& x, const DenseTensor& y) {
  if (!x.same_shape(y)) throw DataError("inner: shape mismatch");
  double s = 0;
  const double* a = x.data();
  const double* b = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += a[i] * b[i];
  return s;
}

double frobenius(const DenseTensor& x) { return std::sqrt(inner(x, x)); }

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  if (std::fwrite(b, 1, 4, f) != 4) throw DataError("write failure");
}

std::uint32_t read_u32(std::FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw DataError("truncated .ten file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_ten(const std::string& path, const DenseTensor& x) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot open for writing: " + path);
  if (std::fwrite("VTEN", 1, 4, f.get()) != 4) throw DataError("write failure: " + path);
  write_u32(f.get(), 1);
  write_u32(f.get(), static_cast<std::uint32_t>(x.order()));
  for (std::size_t d : x.dims()) write_u32(f.get(), static_cast<std::uint32_t>(d));
  static_assert(sizeof(double) == 8);
  // Little-endian float64; assume an LE host (checked once).
  const std::uint32_t probe = 1;
  if (*reinterpret_cast<const unsigned char*>(&probe) != 1)
    throw NumericalError(".ten writer requires a little-endian host");
  if (std::fwrite(x.data(), sizeof(double), x.size(), f.get()) != x.size())
    throw DataError("write failure: " + path);
}

DenseTensor read_ten(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open: " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, "VTEN", 4) != 0)
    throw DataError("bad .ten magic in " + path);
  const std::uint32_t version = read_u32(f.get());
  if (version != 1) throw DataError("unsupported .ten version in " + path);
  const std::uint32_t order = read_u32(f.get());
  if (order == 0 || order > 16) throw DataError("bad .ten order in " + path);
  std::vector<std::size_t> dims(order);
  for (auto& d : dims) d = read_u32(f.get());
  DenseTensor out(dims);
  if (std::fread(out.data(), sizeof(double), out.size(), f.get()) != out.size())
    throw DataError("truncated .ten data in " + path);
  return out;
}

void write_ten_matrix(const std::string& path, const Matrix& m) {
  write_ten(path, DenseTensor::from_matrix(m));
}

Matrix read_ten_matrix(const std::string& path) {
  DenseTensor t = read_ten(path);
  if (t.order() != 2) throw DataError("expected order-2 tensor in " + path);
  return t.as_matrix();
}

void write_ten_vector(const std::string& path, const Vector& v) {
  write_ten(path, DenseTensor::from_vector(v));
}

Vector read_ten_vector(const std::string& path) {
  DenseTensor t = read_ten(path);
  if (t.order() != 1) throw DataError("expected order-1 tensor in " + path);
  return t.as_eigen_vector();
}

}  // namespace vistr
