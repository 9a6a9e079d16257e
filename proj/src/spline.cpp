#include "fitr/spline.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>

#include "fitr/errors.hpp"
#include "fitr/quadrature.hpp"

namespace fitr {

namespace {

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

double multinomial(int d, int i, int j, int k) {
  (void)d;
  return binomial(i + j + k, i) * binomial(j + k, j);
}

double bernstein_single(int i, int j, int k, const std::array<double, 3>& l) {
  if (i < 0 || j < 0 || k < 0) return 0.0;
  return multinomial(i + j + k, i, j, k) * std::pow(l[0], i) * std::pow(l[1], j) * std::pow(l[2], k);
}

// d lambda_m / d(x, y) for the triangle.
std::array<std::array<double, 2>, 3> barycentric_gradients(const std::array<Point2, 3>& tri) {
  const double det = orient2d(tri[0], tri[1], tri[2]);
  std::array<std::array<double, 2>, 3> g{};
  for (int m = 0; m < 3; ++m) {
    const Point2& b = tri[(m + 1) % 3];
    const Point2& c = tri[(m + 2) % 3];
    g[m] = {(b.y - c.y) / det, (c.x - b.x) / det};
  }
  return g;
}

void fnv1a(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
}

}  // namespace

std::vector<std::array<int, 3>> bernstein_indices(int degree) {
  std::vector<std::array<int, 3>> idx;
  idx.reserve(bernstein_count(degree));
  for (int i = degree; i >= 0; --i) {
    for (int j = degree - i; j >= 0; --j) idx.push_back({i, j, degree - i - j});
  }
  return idx;
}

int bernstein_position(int degree, int i, int j) {
  // Blocks of fixed i precede in descending i; j runs downward inside a block.
  int pos = 0;
  for (int ip = degree; ip > i; --ip) pos += degree - ip + 1;
  return pos + (degree - i - j);
}

Eigen::VectorXd bernstein_eval(int degree, const BarycentricCoords& lambda) {
  const auto idx = bernstein_indices(degree);
  Eigen::VectorXd out(idx.size());
  for (std::size_t a = 0; a < idx.size(); ++a)
    out[a] = bernstein_single(idx[a][0], idx[a][1], idx[a][2], lambda.lambda);
  return out;
}

BernsteinJet bernstein_jet(int degree, const std::array<Point2, 3>& tri, const BarycentricCoords& lambda) {
  const auto idx = bernstein_indices(degree);
  const auto g = barycentric_gradients(tri);
  const auto n = static_cast<Eigen::Index>(idx.size());
  BernsteinJet jet{Eigen::VectorXd(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n),
                   Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  const auto& l = lambda.lambda;
  const double d = degree;
  for (Eigen::Index a = 0; a < n; ++a) {
    const auto& t = idx[a];
    jet.value[a] = bernstein_single(t[0], t[1], t[2], l);
    for (int m = 0; m < 3; ++m) {
      auto tm = t;
      --tm[m];
      const double first = d * bernstein_single(tm[0], tm[1], tm[2], l);
      jet.dx[a] += first * g[m][0];
      jet.dy[a] += first * g[m][1];
      for (int k = 0; k < 3; ++k) {
        auto tmk = tm;
        --tmk[k];
        const double second = d * (d - 1.0) * bernstein_single(tmk[0], tmk[1], tmk[2], l);
        jet.dxx[a] += second * g[m][0] * g[k][0];
        jet.dxy[a] += second * g[m][0] * g[k][1];
        jet.dyy[a] += second * g[m][1] * g[k][1];
      }
    }
  }
  return jet;
}

Eigen::MatrixXd bernstein_mass_matrix(int degree, double area) {
  const auto idx = bernstein_indices(degree);
  const auto n = static_cast<Eigen::Index>(idx.size());
  const double denom = binomial(2 * degree, degree) * (2.0 * degree + 1.0) * (degree + 1.0);
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      const auto& p = idx[a];
      const auto& q = idx[b];
      m(a, b) = area * binomial(p[0] + q[0], p[0]) * binomial(p[1] + q[1], p[1]) *
                binomial(p[2] + q[2], p[2]) / denom;
    }
  }
  return m;
}

Eigen::SparseMatrix<double> smoothness_constraints(const TriangulationMesh& mesh, int degree,
                                                   int smoothness) {
  if (degree < 1 || smoothness < 0 || smoothness >= degree)
    throw Error(Errc::InvalidConfig, "spline space needs degree >= 1 and 0 <= smoothness < degree");
  const int nb = bernstein_count(degree);
  const auto& tris = mesh.triangles();
  const auto& pts = mesh.vertices();

  // Raw index of the coefficient with the given vertex powers on triangle t.
  auto raw_index = [&](int t, const std::map<int, int>& power) {
    const auto& tri = tris[t];
    const int i = power.at(tri[0]);
    const int j = power.at(tri[1]);
    return t * nb + bernstein_position(degree, i, j);
  };

  std::vector<Eigen::Triplet<double>> triplets;
  int row = 0;
  for (const auto& edge : mesh.edges()) {
    if (!edge.interior()) continue;
    int t1 = edge.triangles[0];
    int t2 = edge.triangles[1];
    const int a = edge.v0;
    const int b = edge.v1;
    auto opposite = [&](int t, int from, int to) {
      const auto& tri = tris[t];
      for (int e = 0; e < 3; ++e) {
        if (tri[e] == from && tri[(e + 1) % 3] == to) return tri[(e + 2) % 3];
      }
      return -1;
    };
    int p = opposite(t1, a, b);
    if (p < 0) {
      std::swap(t1, t2);
      p = opposite(t1, a, b);
    }
    const int q = opposite(t2, b, a);
    // Coordinates of q with respect to t1 written as (p, a, b).
    const auto beta = barycentric({pts[p], pts[a], pts[b]}, pts[q]);

    for (int rho = 0; rho <= smoothness; ++rho) {
      const auto sub = bernstein_indices(rho);
      const Eigen::VectorXd weights = bernstein_eval(rho, beta);
      for (int j = 0; j <= degree - rho; ++j) {
        const int k = degree - rho - j;
        triplets.emplace_back(row, raw_index(t2, {{q, rho}, {a, j}, {b, k}}), 1.0);
        for (std::size_t s = 0; s < sub.size(); ++s) {
          const auto& [nu, mu, kappa] = sub[s];
          triplets.emplace_back(row, raw_index(t1, {{p, nu}, {a, j + mu}, {b, k + kappa}}), -weights[s]);
        }
        ++row;
      }
    }
  }
  Eigen::SparseMatrix<double> a(row, static_cast<Eigen::Index>(tris.size()) * nb);
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

// ---------------------------------------------------------------------------

std::string space_fingerprint(const TriangulationMesh& mesh, int degree, int smoothness) {
  std::uint64_t h = 1469598103934665603ULL;
  const std::int64_t header[2] = {degree, smoothness};
  fnv1a(h, header, sizeof(header));
  for (const auto& p : mesh.vertices()) {
    fnv1a(h, &p.x, sizeof(double));
    fnv1a(h, &p.y, sizeof(double));
  }
  for (const auto& t : mesh.triangles()) {
    const std::int64_t ids[3] = {t[0], t[1], t[2]};
    fnv1a(h, ids, sizeof(ids));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SplineSpace::SplineSpace(TriangulationMesh mesh, int degree, int smoothness)
    : mesh_(std::move(mesh)), degree_(degree), smoothness_(smoothness) {}

std::shared_ptr<const SplineSpace> SplineSpace::build(TriangulationMesh mesh, int degree, int smoothness) {
  const Eigen::SparseMatrix<double> constraints = smoothness_constraints(mesh, degree, smoothness);
  std::shared_ptr<SplineSpace> space(new SplineSpace(std::move(mesh), degree, smoothness));
  const int nb = bernstein_count(degree);
  const auto raw = static_cast<Eigen::Index>(space->mesh_.num_triangles()) * nb;

  if (constraints.rows() == 0) {
    space->nullspace_ = Eigen::MatrixXd::Identity(raw, raw);
  } else {
    // Rank from the singular values; the orthonormal complement of the row
    // space from a pivoted Householder QR of A^T.
    const Eigen::MatrixXd dense_t = Eigen::MatrixXd(constraints).transpose();
    const Eigen::VectorXd sv = Eigen::BDCSVD<Eigen::MatrixXd>(dense_t).singularValues();
    const double cutoff = 1e-10 * (sv.size() > 0 ? sv[0] : 0.0);
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv[rank] > cutoff) ++rank;
    if (rank >= raw) throw Error(Errc::RankDeficientSpace, "smoothness constraints leave an empty space");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dense_t);
    const Eigen::MatrixXd full_q = qr.householderQ();
    space->nullspace_ = full_q.rightCols(raw - rank);
  }

  const Eigen::MatrixXd& q = space->nullspace_;
  const Eigen::Index m = q.cols();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd rough = Eigen::MatrixXd::Zero(m, m);
  const auto rule = triangle_rule(2 * std::max(degree - 2, 0));
  for (int t = 0; t < static_cast<int>(space->mesh_.num_triangles()); ++t) {
    const double area = space->mesh_.triangle_area(t);
    const auto qt = q.middleRows(static_cast<Eigen::Index>(t) * nb, nb);
    gram.noalias() += qt.transpose() * bernstein_mass_matrix(degree, area) * qt;

    Eigen::MatrixXd energy = Eigen::MatrixXd::Zero(nb, nb);
    const auto tri = space->mesh_.triangle_points(t);
    for (const auto& node : rule) {
      const auto jet = bernstein_jet(degree, tri, node.point);
      const double w = node.weight * area;
      energy.noalias() += w * (jet.dxx * jet.dxx.transpose() + 2.0 * jet.dxy * jet.dxy.transpose() +
                               jet.dyy * jet.dyy.transpose());
    }
    rough.noalias() += qt.transpose() * energy * qt;
  }
  space->gram_ = 0.5 * (gram + gram.transpose());
  space->roughness_ = 0.5 * (rough + rough.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(space->gram_);
  const Eigen::VectorXd ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) throw Error(Errc::RankDeficientSpace, "Gram matrix is not positive definite");
  const Eigen::MatrixXd& v = eig.eigenvectors();
  space->gram_sqrt_ = v * ev.cwiseSqrt().asDiagonal() * v.transpose();
  space->gram_inv_sqrt_ = v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
  space->hash_ = space_fingerprint(space->mesh_, degree, smoothness);
  return space;
}

Eigen::VectorXd SplineSpace::basis_at(const Point2& p) const {
  const auto t = mesh_.locate(p);
  if (!t) return Eigen::VectorXd::Zero(dim());
  const int nb = basis_per_triangle();
  const Eigen::VectorXd local = bernstein_eval(degree_, barycentric(mesh_.triangle_points(*t), p));
  return nullspace_.middleRows(static_cast<Eigen::Index>(*t) * nb, nb).transpose() * local;
}

// ---------------------------------------------------------------------------

SplineFunction::SplineFunction(SplineSpacePtr space, Eigen::VectorXd coeffs)
    : space_(std::move(space)), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != space_->dim())
    throw Error(Errc::SpaceMismatch, "coefficient vector does not match the spline space dimension");
  raw_ = space_->to_raw(coeffs_);
}

SplineFunction SplineFunction::zero(SplineSpacePtr space) {
  const auto m = space->dim();
  return SplineFunction(std::move(space), Eigen::VectorXd::Zero(m));
}

double SplineFunction::operator()(const Point2& p) const {
  const auto t = space_->mesh().locate(p);
  if (!t) return 0.0;
  const int nb = space_->basis_per_triangle();
  const Eigen::VectorXd local =
      bernstein_eval(space_->degree(), barycentric(space_->mesh().triangle_points(*t), p));
  return raw_.segment(static_cast<Eigen::Index>(*t) * nb, nb).dot(local);
}

Eigen::VectorXd SplineFunction::operator()(std::span<const Point2> points) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) out[static_cast<Eigen::Index>(i)] = (*this)(points[i]);
  return out;
}

SplineFunction::Local SplineFunction::on_triangle(int t, const Point2& p) const {
  const auto tri = space_->mesh().triangle_points(t);
  const auto jet = bernstein_jet(space_->degree(), tri, barycentric(tri, p));
  const int nb = space_->basis_per_triangle();
  const auto c = raw_.segment(static_cast<Eigen::Index>(t) * nb, nb);
  return {c.dot(jet.value), c.dot(jet.dx), c.dot(jet.dy)};
}

double SplineFunction::inner(const SplineFunction& other) const {
  if (space_->hash() != other.space_->hash())
    throw Error(Errc::SpaceMismatch, "inner product of functions from different spaces");
  return coeffs_.dot(space_->gram() * other.coeffs_);
}

nlohmann::json to_json(const SplineFunction& fn) {
  return {{"space_hash", fn.space().hash()},
          {"coeffs", std::vector<double>(fn.coeffs().data(), fn.coeffs().data() + fn.coeffs().size())}};
}

SplineFunction spline_function_from_json(SplineSpacePtr space, const nlohmann::json& j) {
  std::string hash;
  std::vector<double> coeffs;
  try {
    hash = j.at("space_hash").get<std::string>();
    coeffs = j.at("coeffs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidData, std::string("malformed spline function JSON: ") + e.what());
  }
  if (hash != space->hash())
    throw Error(Errc::SpaceMismatch, "spline function was built for space " + hash + ", not " + space->hash());
  return SplineFunction(std::move(space), Eigen::Map<const Eigen::VectorXd>(coeffs.data(),
                                                                              static_cast<Eigen::Index>(coeffs.size())));
}

// ---------------------------------------------------------------------------

ImageSmoother::ImageSmoother(SplineSpacePtr space, std::vector<Point2> points, double penalty)
    : space_(std::move(space)), points_(std::move(points)), penalty_(penalty) {
  if (!(penalty_ >= 0.0) || !std::isfinite(penalty_))
    throw Error(Errc::InvalidConfig, "smoothing penalty must be finite and nonnegative");
  const SplineSpace& sp = *space_;
  const auto m = static_cast<Eigen::Index>(sp.dim());
  const int nb = sp.basis_per_triangle();

  std::vector<Eigen::VectorXd> rows;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto t = sp.mesh().locate(points_[i]);
    if (!t) continue;
    const Eigen::VectorXd local =
        bernstein_eval(sp.degree(), barycentric(sp.mesh().triangle_points(*t), points_[i]));
    rows.push_back(sp.nullspace().middleRows(static_cast<Eigen::Index>(*t) * nb, nb).transpose() * local);
    inside_.push_back(static_cast<int>(i));
  }
  const auto n_in = static_cast<Eigen::Index>(rows.size());
  design_.resize(n_in, m);
  for (Eigen::Index r = 0; r < n_in; ++r) design_.row(r) = rows[r].transpose();

  Eigen::MatrixXd stacked = design_;
  if (penalty_ > 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sp.roughness());
    const Eigen::MatrixXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                                 eig.eigenvectors().transpose();
    stacked.conservativeResize(n_in + m, m);
    stacked.bottomRows(m) = std::sqrt(penalty_) * root;
  }
  if (stacked.rows() < m)
    throw Error(Errc::UnderdeterminedFit, "fewer in-domain points than spline coefficients");

  Eigen::BDCSVD<Eigen::MatrixXd> svd(stacked, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || !(sv[sv.size() - 1] > 1e-10 * sv[0]))
    throw Error(Errc::UnderdeterminedFit, "smoothing design is rank deficient");
  const Eigen::MatrixXd u_top = svd.matrixU().topRows(n_in);
  const Eigen::MatrixXd pinv = svd.matrixV() * sv.cwiseInverse().asDiagonal() * u_top.transpose();
  hat_trace_ = u_top.squaredNorm();

  projection_ = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(points_.size()));
  for (Eigen::Index r = 0; r < n_in; ++r) projection_.col(inside_[r]) = pinv.col(r);
}

Eigen::VectorXd ImageSmoother::fit(const Eigen::VectorXd& values) const {
  if (values.size() != static_cast<Eigen::Index>(points_.size()))
    throw Error(Errc::InvalidData, "image size does not match the smoothing grid");
  if (!values.allFinite()) throw Error(Errc::InvalidData, "image contains non-finite values");
  return projection_ * values;
}

Eigen::MatrixXd ImageSmoother::fit_rows(const Eigen::MatrixXd& images) const {
  if (images.cols() != static_cast<Eigen::Index>(points_.size()))
    throw Error(Errc::InvalidData, "image width does not match the smoothing grid");
  if (!images.allFinite()) throw Error(Errc::InvalidData, "images contain non-finite values");
  return images * projection_.transpose();
}

SplineFunction ImageSmoother::fit_function(const Eigen::VectorXd& values) const {
  return SplineFunction(space_, fit(values));
}

double ImageSmoother::residual_ss(const Eigen::VectorXd& values, const Eigen::VectorXd& coeffs) const {
  const Eigen::VectorXd fitted = design_ * coeffs;
  double rss = 0.0;
  for (std::size_t r = 0; r < inside_.size(); ++r) {
    const double e = values[inside_[r]] - fitted[static_cast<Eigen::Index>(r)];
    rss += e * e;
  }
  return rss;
}

SplineFunction fit_image(SplineSpacePtr space, std::span<const Point2> grid_points,
                         const Eigen::VectorXd& values, double penalty) {
  const ImageSmoother smoother(std::move(space), {grid_points.begin(), grid_points.end()}, penalty);
  return smoother.fit_function(values);
}

double select_penalty_gcv(SplineSpacePtr space, std::span<const Point2> grid_points,
                          const Eigen::MatrixXd& images, std::span<const double> candidates) {
  if (candidates.empty()) throw Error(Errc::InvalidConfig, "no penalty candidates for GCV");
  double best = candidates[0];
  double best_score = std::numeric_limits<double>::infinity();
  for (double lambda : candidates) {
    const ImageSmoother smoother(space, {grid_points.begin(), grid_points.end()}, lambda);
    const double n = static_cast<double>(smoother.inside_indices().size());
    const double denom = n - smoother.hat_trace();
    if (!(denom > 0.0)) continue;
    const Eigen::MatrixXd coeffs = smoother.fit_rows(images);
    double rss = 0.0;
    for (Eigen::Index i = 0; i < images.rows(); ++i)
      rss += smoother.residual_ss(images.row(i).transpose(), coeffs.row(i).transpose());
    const double score = n * rss / (denom * denom);
    if (score < best_score) {
      best_score = score;
      best = lambda;
    }
  }
  return best;
}

}  // namespace fitr
