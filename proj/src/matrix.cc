#include "ttspo/matrix.h"

#include <algorithm>
#include <cmath>

#include "ttspo/error.h"

namespace ttspo {

void Matrix::axpy(double alpha, const Matrix& other) {
  if (!same_shape(other)) throw InvalidArgument("matrix shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
}

void Matrix::scale(double alpha) {
  for (double& v : data_) v *= alpha;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double Matrix::max_abs() const {
  double m = 0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace ttspo
