#include "kmv/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kmv/error.hpp"

namespace kmv {

namespace {
constexpr double kPi = 3.141592653589793;
}

AnisoGrid::AnisoGrid(BlockStructure blocks, std::vector<double> half_extents,
                     std::vector<int> points)
    : blocks_(std::move(blocks)), L_(std::move(half_extents)), n_(std::move(points)) {
  const int N = blocks_.N;
  KMV_DEMAND(N >= 1, "grid needs a valid block structure");
  KMV_DEMAND(static_cast<int>(L_.size()) == N, "half_extents must have N entries");
  KMV_DEMAND(static_cast<int>(n_.size()) == N, "points_per_dim must have N entries");
  for (int k = 0; k < N; ++k) {
    KMV_DEMAND(L_[k] > 0, "half extents must be positive");
    KMV_DEMAND(n_[k] >= 2 && n_[k] % 2 == 0, "points per dimension must be even and >= 2");
  }
  strides_.assign(N, 1);
  for (int k = N - 2; k >= 0; --k) strides_[k] = strides_[k + 1] * n_[k + 1];
  size_ = strides_[0] * n_[0];
  spec_shape_ = n_;
  spec_shape_[N - 1] = n_[N - 1] / 2 + 1;
  spec_size_ = 1;
  for (int s : spec_shape_) spec_size_ *= s;
  cell_volume_ = 1.0;
  for (int k = 0; k < N; ++k) cell_volume_ *= spacing(k);

  auto cache = std::make_shared<Cache>();
  cache->xi.assign(N, std::vector<double>(spec_size_));
  cache->nyq.assign(spec_size_, 0);
  cache->norm.assign(spec_size_, 0.0);
  cache->weight.assign(spec_size_, 2.0);
  std::vector<int> idx(N, 0);
  std::vector<double> block_sq(blocks_.r + 1);
  for (std::size_t s = 0; s < spec_size_; ++s) {
    std::fill(block_sq.begin(), block_sq.end(), 0.0);
    bool nyq = false;
    for (int k = 0; k < N; ++k) {
      const double xi = freq(k, idx[k]);
      cache->xi[k][s] = xi;
      if (idx[k] == n_[k] / 2) nyq = true;
      block_sq[blocks_.block_of(k)] += xi * xi;
    }
    double nb = 0.0;
    for (int i = 0; i <= blocks_.r; ++i) nb += std::pow(std::sqrt(block_sq[i]), 1.0 / (2 * i + 1));
    cache->norm[s] = nb;
    cache->nyq[s] = nyq ? 1 : 0;
    const int last = idx[N - 1];
    if (last == 0 || last == n_[N - 1] / 2) cache->weight[s] = 1.0;
    for (int k = N - 1; k >= 0; --k) {
      if (++idx[k] < spec_shape_[k]) break;
      idx[k] = 0;
    }
  }
  cache_ = std::move(cache);
}

AnisoGrid AnisoGrid::WithDefaultExtents(BlockStructure blocks, std::vector<int> points,
                                        double L0) {
  std::vector<double> L(blocks.N);
  for (int k = 0; k < blocks.N; ++k) L[k] = std::pow(L0, blocks.weight_of(k));
  return AnisoGrid(std::move(blocks), std::move(L), std::move(points));
}

Eigen::VectorXd AnisoGrid::point(std::size_t p) const {
  Eigen::VectorXd z(dim());
  for (int k = 0; k < dim(); ++k) {
    const int i = static_cast<int>((p / strides_[k]) % n_[k]);
    z(k) = coord(k, i);
  }
  return z;
}

void AnisoGrid::unravel(std::size_t p, int* idx) const {
  for (int k = 0; k < dim(); ++k) idx[k] = static_cast<int>((p / strides_[k]) % n_[k]);
}

double AnisoGrid::freq(int k, int i) const {
  const int n = n_[k];
  const int m = (i >= n / 2) ? i - n : i;
  return kPi / L_[k] * m;
}

double AnisoGrid::max_radius() const {
  double r = 0.0;
  for (int k = 0; k < dim(); ++k) {
    r = std::max(r, std::pow(nyquist(k), 1.0 / blocks_.weight_of(k)));
  }
  return r;
}

int AnisoGrid::J_max() const {
  const double R = max_radius();
  int j = -1;
  while (std::ldexp(1.0, j + 2) <= R * (1 + 1e-12)) ++j;
  return j;
}

bool AnisoGrid::operator==(const AnisoGrid& o) const {
  return blocks_.dims == o.blocks_.dims && L_ == o.L_ && n_ == o.n_;
}

GridField::GridField(AnisoGrid grid, int channels, double fill)
    : grid_(std::move(grid)), channels_(channels) {
  KMV_DEMAND(channels >= 1, "a field needs at least one channel");
  values_.assign(grid_.size() * channels, fill);
}

GridField::GridField(AnisoGrid grid, int channels, std::vector<double> values)
    : grid_(std::move(grid)), channels_(channels), values_(std::move(values)) {
  KMV_DEMAND(channels >= 1, "a field needs at least one channel");
  KMV_DEMAND(values_.size() == grid_.size() * channels, "value count mismatch");
}

GridField GridField::extract(int c) const {
  GridField out(grid_, 1);
  std::copy(channel(c), channel(c) + size(), out.channel(0));
  return out;
}

double GridField::sup_norm() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double GridField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double GridField::max() const { return *std::max_element(values_.begin(), values_.end()); }

double GridField::integral(int c) const {
  double s = 0.0;
  const double* v = channel(c);
  for (std::size_t p = 0; p < size(); ++p) s += v[p];
  return s * grid_.cell_volume();
}

double GridField::inner(const GridField& o) const {
  KMV_DEMAND(o.values_.size() == values_.size(), "inner product of mismatched fields");
  double s = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) s += values_[i] * o.values_[i];
  return s * grid_.cell_volume();
}

bool GridField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

GridField& GridField::operator+=(const GridField& o) {
  KMV_DEMAND(o.values_.size() == values_.size(), "adding mismatched fields");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  return *this;
}

GridField& GridField::operator-=(const GridField& o) {
  KMV_DEMAND(o.values_.size() == values_.size(), "subtracting mismatched fields");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
  return *this;
}

GridField& GridField::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

TimeField::TimeField(double t0, double t1, std::vector<GridField> fields)
    : t0_(t0), t1_(t1), fields_(std::move(fields)) {
  KMV_DEMAND(!fields_.empty(), "a time field needs at least one slice");
  KMV_DEMAND(t1 >= t0, "time interval must be ordered");
  for (const auto& f : fields_) {
    KMV_DEMAND(f.grid() == fields_.front().grid(), "time slices must share one grid");
    KMV_DEMAND(f.channels() == fields_.front().channels(), "time slices must share channels");
  }
}

TimeField TimeField::Constant(double t0, double t1, int n_points, const GridField& fill) {
  return TimeField(t0, t1, std::vector<GridField>(n_points, fill));
}

GridField TimeField::at_time(double t) const {
  if (n_points() == 1 || t <= t0_) return fields_.front();
  if (t >= t1_) return fields_.back();
  const double x = (t - t0_) / dt();
  const int i = std::min(static_cast<int>(x), n_points() - 2);
  const double w = x - i;
  GridField out = fields_[i];
  auto& v = out.values();
  const auto& b = fields_[i + 1].values();
  for (std::size_t q = 0; q < v.size(); ++q) v[q] = (1 - w) * v[q] + w * b[q];
  return out;
}

void write_gfd(const std::string& path, const GridField& f) {
  static_assert(std::endian::native == std::endian::little, "gfd writer assumes little endian");
  nlohmann::json h;
  h["dims"] = f.grid().blocks().dims;
  h["half_extents"] = f.grid().half_extents();
  h["points_per_dim"] = f.grid().points();
  h["channels"] = f.channels();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot open " + path);
  out << h.dump() << '\n';
  const std::size_t P = f.size();
  const int m = f.channels();
  std::vector<double> row(P * m);
  for (std::size_t p = 0; p < P; ++p)
    for (int c = 0; c < m; ++c) row[p * m + c] = f.at(p, c);
  out.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(double)));
  if (!out) throw Error(ErrorKind::kIoError, "write failed for " + path);
}

GridField read_gfd(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kIoError, path + ": bad header: " + e.what());
  }
  AnisoGrid grid(BlockStructure::FromDims(h.at("dims").get<std::vector<int>>()),
                 h.at("half_extents").get<std::vector<double>>(),
                 h.at("points_per_dim").get<std::vector<int>>());
  const int m = h.at("channels").get<int>();
  std::vector<double> row(grid.size() * m);
  in.read(reinterpret_cast<char*>(row.data()),
          static_cast<std::streamsize>(row.size() * sizeof(double)));
  if (!in) throw Error(ErrorKind::kIoError, path + ": truncated data");
  GridField f(grid, m);
  for (std::size_t p = 0; p < grid.size(); ++p)
    for (int c = 0; c < m; ++c) f.at(p, c) = row[p * m + c];
  return f;
}

}  // namespace kmv
