#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dhglm/model_spec.hpp"
#include "dhglm/rng.hpp"
#include "dhglm/sim_data.hpp"

using namespace dhglm;

namespace {

double ks_uniform(VectorXd v) {
  std::sort(v.data(), v.data() + v.size());
  double worst = 0.0;
  Eigen::Index n = v.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    worst = std::max(worst, std::abs(v[i] - (double)(i + 1) / (double)n));
    worst = std::max(worst, std::abs(v[i] - (double)i / (double)n));
  }
  return worst;
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_CASE("stream draws pass distributional smoke tests") {
  const int n = 100000;
  Rng ru(3, "test-u"), rn(3, "test-n");
  VectorXd u(n), z(n);
  for (int i = 0; i < n; ++i) {
    u[i] = ru.uniform();
    z[i] = standard_normal_cdf(rn.normal());
  }
  CHECK(ks_uniform(u) < 0.01);
  CHECK(ks_uniform(z) < 0.01);
}

TEST_CASE("count draws have the right first two moments") {
  const int n = 100000;
  Rng rp(5, "test-pois"), rnb(5, "test-nb");
  double pm = 0.0, pv = 0.0, nm = 0.0, nv = 0.0;
  for (int i = 0; i < n; ++i) {
    double a = (double)rp.poisson(7.5);
    double b = (double)rnb.neg_binomial(4.0, 2.0);
    pm += a;
    pv += a * a;
    nm += b;
    nv += b * b;
  }
  pm /= n;
  pv = pv / n - pm * pm;
  nm /= n;
  nv = nv / n - nm * nm;
  CHECK(pm == doctest::Approx(7.5).epsilon(0.01));
  CHECK(pv / pm == doctest::Approx(1.0).epsilon(0.02));
  CHECK(nm == doctest::Approx(4.0).epsilon(0.02));
  CHECK(nv == doctest::Approx(negbin_variance(4.0, 2.0)).epsilon(0.05));
}

TEST_CASE("standardize centers and scales exactly") {
  VectorXd v(5);
  v << 1.0, 4.0, -2.0, 0.5, 3.0;
  VectorXd s = standardize(v);
  CHECK(std::abs(s.mean()) < 1e-12);
  double sd = std::sqrt((s.array() - s.mean()).square().sum() / (s.size() - 1));
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS((void)standardize(VectorXd::Ones(1)), dhglm_error);
  CHECK_THROWS_AS((void)standardize(VectorXd::Ones(5)), dhglm_error);
}

TEST_CASE("generators replay under a fixed seed and move under a new one") {
  PoissonReParams p;
  p.n = 60;
  Dataset a = simulate_poisson_re(p, 42);
  Dataset b = simulate_poisson_re(p, 42);
  Dataset c = simulate_poisson_re(p, 43);
  CHECK(a.y == b.y);
  CHECK(a.col("x") == b.col("x"));
  CHECK(a.y != c.y);

  NegbinParams np;
  np.n = 40;
  CHECK(simulate_negbin(np, 1).y == simulate_negbin(np, 1).y);
  GaussianGroupsParams gp;
  gp.per_group = 10;
  CHECK(simulate_gaussian_groups(gp, 1).y == simulate_gaussian_groups(gp, 1).y);
  CHECK(simulate_sleep(SleepParams{}, 1).y == simulate_sleep(SleepParams{}, 1).y);
}

TEST_CASE("per-column streams: changing response parameters leaves covariates alone") {
  PoissonReParams a, b;
  a.n = b.n = 80;
  b.gamma1 = 3.0;  // different noise model
  Dataset da = simulate_poisson_re(a, 11);
  Dataset db = simulate_poisson_re(b, 11);
  CHECK(da.col("x") == db.col("x"));
  CHECK(da.col("z") == db.col("z"));
  CHECK(da.y != db.y);
}

TEST_CASE("poisson generator shapes and count validity") {
  PoissonReParams p;
  p.n = 50;
  Dataset d = simulate_poisson_re(p, 2);
  CHECK(d.n() == 50);
  CHECK(d.n_groups == 50);  // one random effect per observation
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    CHECK(d.y[i] >= 0.0);
    CHECK(d.y[i] == std::floor(d.y[i]));
  }
  CHECK(d.col("x").minCoeff() >= 0.0);
  CHECK(d.col("x").maxCoeff() <= 1.0);
}

TEST_CASE("negbin generator standardizes its size covariate") {
  NegbinParams p;
  p.n = 200;
  Dataset d = simulate_negbin(p, 9);
  const VectorXd& z = d.col("z");
  CHECK(std::abs(z.mean()) < 1e-12);
  double sd = std::sqrt((z.array() - z.mean()).square().sum() / (z.size() - 1));
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.col("x").minCoeff() >= 10.0);
  CHECK(d.col("x").maxCoeff() <= 20.0);
}

TEST_CASE("grouped gaussian generator emits a group-level covariate") {
  GaussianGroupsParams p;
  p.n_groups = 5;
  p.per_group = 12;
  Dataset d = simulate_gaussian_groups(p, 4);
  CHECK(d.n() == 60);
  CHECK(d.n_groups == 5);
  REQUIRE(d.has_group_col("z"));
  CHECK(d.group_col("z").size() == 5);
  CHECK(d.group_col("z").minCoeff() >= -1.0);
  CHECK(d.group_col("z").maxCoeff() <= 1.0);
  for (Eigen::Index i = 0; i < d.n(); ++i) CHECK(d.group[i] == i / 12);
}

TEST_CASE("lattice adjacency has rook neighbor counts") {
  MatrixXd a = lattice_adjacency(3, 3);
  REQUIRE(a.rows() == 9);
  CHECK(a == a.transpose());
  VectorXd deg = a.rowwise().sum();
  CHECK(deg[0] == doctest::Approx(2.0));  // corner
  CHECK(deg[1] == doctest::Approx(3.0));  // edge
  CHECK(deg[4] == doctest::Approx(4.0));  // center
  CHECK_THROWS_AS((void)lattice_adjacency(1, 1), dhglm_error);
}

TEST_CASE("spatial count generator wires the lag, offset, and W together") {
  SpatialCountsParams p;
  Dataset d = simulate_spatial_counts(p, 8);
  CHECK(d.n() == 36);
  REQUIRE(d.W.has_value());
  CHECK(d.W->rows() == 36);
  for (Eigen::Index i = 0; i < 36; ++i) CHECK(d.W->row(i).sum() == doctest::Approx(1.0));
  REQUIRE(d.offset.has_value());
  for (Eigen::Index i = 0; i < 36; ++i)
    CHECK((*d.offset)[i] == doctest::Approx(std::log(d.col("births")[i])));
  CHECK(d.col("ibn").minCoeff() >= 10.0);
  CHECK(d.col("ibn").maxCoeff() <= 70.0);
  // the lag covariate is the neighborhood mean of the preliminary rates,
  // so it inherits their scale (deaths per thousand births)
  CHECK(d.col("lag_rates").minCoeff() > 0.0);
  for (Eigen::Index i = 0; i < d.n(); ++i) CHECK(d.y[i] == std::floor(d.y[i]));

  SpatialCountsParams nb = p;
  nb.negbin = true;
  Dataset dn = simulate_spatial_counts(nb, 8);
  CHECK(dn.col("births") == d.col("births"));  // shared covariate streams
}

TEST_CASE("sleep generator covers subjects times days") {
  SleepParams p;
  Dataset d = simulate_sleep(p, 6);
  CHECK(d.n() == 180);
  CHECK(d.n_groups == 18);
  const VectorXd& day = d.col("day");
  for (int i = 0; i < 18; ++i)
    for (int j = 0; j < 10; ++j) CHECK(day[i * 10 + j] == doctest::Approx((double)j));
  // reaction times on the scale of seconds
  CHECK(d.y.mean() > 0.0);
  CHECK(d.y.mean() < 1.0);
}

TEST_CASE("csv ingestion remaps group labels and applies the response scale") {
  const char* path = "ingest_test.csv";
  {
    std::ofstream out(path);
    out << "rt,day,subject\n";
    out << "250,0,s3\n";
    out << "260,1,s3\n";
    out << "240,0,s1\n";
    out << "255,1,s1\n";
  }
  CsvSchema schema;
  schema.response = "rt";
  schema.covariates = {"day"};
  schema.group = "subject";
  schema.response_scale = 1e-3;  // milliseconds in, seconds out
  Dataset d = ingest_csv(path, schema);
  CHECK(d.n() == 4);
  CHECK(d.y[0] == doctest::Approx(0.25));
  CHECK(d.n_groups == 2);
  CHECK(d.group[0] == 0);  // s3 first seen -> index 0
  CHECK(d.group[2] == 1);
  CHECK(d.col("day")[1] == doctest::Approx(1.0));
  std::remove(path);
}

TEST_CASE("csv ingestion rejects malformed input") {
  const char* path = "ingest_bad.csv";
  CsvSchema schema;
  schema.response = "y";
  schema.covariates = {"x"};

  {
    std::ofstream out(path);
    out << "y,x\n";
  }
  CHECK_THROWS_AS((void)ingest_csv(path, schema), dhglm_error);  // header only

  {
    std::ofstream out(path);
    out << "y,x\n1.0,2.0\n3.0\n";
  }
  CHECK_THROWS_AS((void)ingest_csv(path, schema), dhglm_error);  // short row

  {
    std::ofstream out(path);
    out << "y,x\n1.0,apple\n";
  }
  CHECK_THROWS_AS((void)ingest_csv(path, schema), dhglm_error);  // non-numeric

  {
    std::ofstream out(path);
    out << "y,z\n1.0,2.0\n";
  }
  CHECK_THROWS_AS((void)ingest_csv(path, schema), dhglm_error);  // missing column

  CHECK_THROWS_AS((void)ingest_csv("no_such_file.csv", schema), dhglm_error);
  std::remove(path);
}

TEST_CASE("written datasets can be read back") {
  SleepParams p;
  p.subjects = 3;
  p.days = 4;
  Dataset d = simulate_sleep(p, 12);
  const char* path = "roundtrip_data.csv";
  write_csv(d, path);

  CsvSchema schema;
  schema.response = "y";
  schema.covariates = {"day"};
  schema.group = "group";
  Dataset back = ingest_csv(path, schema);
  CHECK(back.n() == d.n());
  CHECK(back.n_groups == d.n_groups);
  CHECK((back.y - d.y).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK((back.col("day") - d.col("day")).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  std::remove(path);
}

TEST_CASE("adjacency files round-trip through read_adjacency_csv") {
  MatrixXd a = lattice_adjacency(2, 3);
  const char* path = "adj_test.csv";
  {
    std::ofstream out(path);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) out << (j ? "," : "") << a(i, j);
      out << "\n";
    }
  }
  MatrixXd back = read_adjacency_csv(path);
  CHECK(back == a);
  CHECK_NOTHROW((void)row_standardize(back));
  std::remove(path);
}
