// Prints one line per acceptance criterion and exits non-zero if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ood/analysis.hpp"
#include "ood/data_io.hpp"
#include "ood/density_models.hpp"
#include "ood/detectors.hpp"
#include "ood/error.hpp"
#include "ood/estimators.hpp"
#include "ood/experiment.hpp"
#include "oracles.hpp"

using namespace ood;
namespace fs = std::filesystem;

namespace {

enum class Status { pass, fail, skip };

struct Outcome {
  Status status = Status::pass;
  std::ostringstream details;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      status = Status::fail;
      details << "[failed: " << what << "] ";
    }
  }
};

const fs::path kSource = OODDIAG_SOURCE_DIR;

Distribution iso(std::size_t d, double var, double mean = 0.0) {
  return Distribution::isotropic_gaussian(std::vector<double>(d, mean), var);
}

Eigen::MatrixXd iso_cov(std::size_t d, double var) { return var * Eigen::MatrixXd::Identity(d, d); }

// Entropy of each fixture from its own closed form, independent of the library.
struct LedgerFixture {
  std::string name;
  Distribution dist;
  double entropy;
};

std::vector<LedgerFixture> ledger_fixtures() {
  Eigen::MatrixXd full(3, 3);
  full << 2.0, 0.5, 0.1, 0.5, 1.0, -0.2, 0.1, -0.2, 0.8;
  const std::vector<double> p1 = {0.1, 0.2, 0.7}, p2 = {0.5, 0.5};
  return {
      {"N(0,1)", iso(1, 1), oracle::gaussian_entropy(iso_cov(1, 1))},
      {"N(0,16 I16)", iso(16, 16), oracle::gaussian_entropy(iso_cov(16, 16))},
      {"diagonal d=4",
       Distribution::diagonal_gaussian({1, -1, 0, 2}, {0.5, 2, 3, 0.1}),
       oracle::gaussian_entropy(Eigen::Vector4d(0.5, 2, 3, 0.1).asDiagonal().toDenseMatrix())},
      {"full d=3", Distribution::full_gaussian({0, 1, 2}, full), oracle::gaussian_entropy(full)},
      {"uniform box", Distribution::uniform_box({0, -1}, {2, 3}), std::log(2.0 * 4.0)},
      {"categorical product", Distribution::categorical_product({p1, p2}),
       oracle::categorical_entropy(p1) + oracle::categorical_entropy(p2)},
  };
}

void criterion_1(Outcome& o) {
  int shown = 0;
  for (const auto& f : ledger_fixtures()) {
    const auto model = DensityModel::exact(f.dist);
    std::vector<double> abs_res, ses;
    for (std::size_t n : {100u, 1000u, 10000u, 100000u}) {
      const auto l = decomposition_ledger(f.dist, model, n, 11 + n, Exec{4});
      const double res = l.avg_log_likelihood.value + 0.0 + f.entropy;
      const double se = l.avg_log_likelihood.std_error;
      abs_res.push_back(std::abs(res));
      ses.push_back(se);
      o.check(std::abs(res) <= 4 * se + 1e-12, f.name + " |residual| > 4 SE at n=" + std::to_string(n));
      if (n == 100000 && shown++ < 2) o.details << f.name << " residual " << res << " (SE " << se << ") ";
    }
    o.check(abs_res[3] <= abs_res[0] + 4 * ses[3] + 1e-12, f.name + " residual not shrinking");
    o.check(ses[3] <= ses[0], f.name + " standard error not shrinking");
  }
}

void criterion_2(Outcome& o) {
  const auto p = iso(16, 16), q = iso(16, 1);
  const auto model = DensityModel::exact(p);
  const auto in = decomposition_ledger(p, model, 100000, 21, Exec{4});
  const auto out = decomposition_ledger(q, model, 100000, 22, Exec{4});
  const double gap = out.avg_log_likelihood.value - in.avg_log_likelihood.value;
  const double se = std::hypot(in.avg_log_likelihood.std_error, out.avg_log_likelihood.std_error);
  const double expected = oracle::iso_contrast(16, 16, 1, 16).mean;
  o.details << "gap " << gap << " expected " << expected << " SE " << se;
  o.check(std::abs(expected - 7.5) < 1e-12, "oracle value");
  o.check(std::abs(gap - expected) <= 4 * se, "gap outside 4 SE");
}

void criterion_3(Outcome& o) {
  const auto c = contrast_stats(iso(16, 16), iso(16, 1), DensityModel::exact(iso(16, 16)), 100000, 31, Exec{4});
  const auto m = oracle::iso_contrast(16, 16, 1, 16);
  const double oracle_bound = 1 - m.var / (m.mean * m.mean);
  o.check(c.chebyshev_bound.has_value(), "bound undefined");
  const double bound = c.chebyshev_bound.value_or(-1);
  const double p = c.empirical_p_z_gt_0.value;
  const double se = std::sqrt(std::max(bound * (1 - bound), 0.0) / 100000.0);
  o.details << "bound " << bound << " (oracle " << oracle_bound << ") P(Z>0) " << p << "; ";
  o.check(std::abs(bound - 0.857) <= 0.01, "bound not 0.857 +- 0.01");
  o.check(p >= bound - 3 * se, "empirical P(Z>0) below bound - 3 SE");
  double previous = -1e300;
  o.details << "bound over d:";
  for (std::size_t d : {2u, 4u, 8u, 16u, 32u, 64u}) {
    const auto s = contrast_stats(iso(d, 16), iso(d, 1), DensityModel::exact(iso(d, 16)), 20000, 32 + d, Exec{4});
    const double b = s.chebyshev_bound.value_or(-1e300);
    o.details << " " << b;
    o.check(b > previous, "bound not increasing at d=" + std::to_string(d));
    previous = b;
  }
}

void criterion_4(Outcome& o) {
  struct Fixture {
    std::string name;
    Distribution model, reference, data;
    double expected;
  };
  Eigen::MatrixXd a(2, 2), b(2, 2), q(2, 2);
  a << 2.0, 0.3, 0.3, 1.0;
  b << 1.0, -0.4, -0.4, 3.0;
  q << 1.5, 0.2, 0.2, 0.5;
  const Eigen::Vector2d ma(0.5, 0), mb(0, -1), mq(0.2, 0.3);
  const std::vector<Fixture> fixtures = {
      {"Q=P=N(0,1), R=N(0,4)", iso(1, 1), iso(1, 4), iso(1, 1), oracle::quad_normal_kl(0, 1, 0, 4) - 0.0},
      {"Q=R=N(0,4), P=N(0,1)", iso(1, 1), iso(1, 4), iso(1, 4), 0.0 - oracle::quad_normal_kl(0, 4, 0, 1)},
      {"flagship d=16", iso(16, 16), iso(16, 4), iso(16, 1),
       oracle::gaussian_kl(Eigen::VectorXd::Zero(16), iso_cov(16, 1), Eigen::VectorXd::Zero(16), iso_cov(16, 4)) -
           oracle::gaussian_kl(Eigen::VectorXd::Zero(16), iso_cov(16, 1), Eigen::VectorXd::Zero(16), iso_cov(16, 16))},
      {"full d=2", Distribution::full_gaussian({ma[0], ma[1]}, a), Distribution::full_gaussian({mb[0], mb[1]}, b),
       Distribution::full_gaussian({mq[0], mq[1]}, q), oracle::gaussian_kl(mq, q, mb, b) - oracle::gaussian_kl(mq, q, ma, a)},
  };
  o.check(std::abs(fixtures[0].expected - 0.318147) < 1e-6, "oracle 0.318147");
  o.check(std::abs(fixtures[1].expected + 0.806853) < 1e-6, "oracle -0.806853");
  std::uint64_t seed = 41;
  for (const auto& f : fixtures) {
    const auto data = sample(f.data, 100000, seed++, Exec{4});
    const auto s = score_likelihood_ratio(DensityModel::exact(f.model), DensityModel::exact(f.reference), data, Exec{4});
    const auto m = mean_estimate(s.scores, "ratio");
    o.details << f.name << ": " << m.value << " vs " << f.expected << "; ";
    o.check(std::abs(m.value - f.expected) <= 4 * m.std_error, f.name + " outside 4 SE");
  }
}

const DetectorResult* find_detector(const ExperimentReport& r, const std::string& name) {
  for (const auto& d : r.detectors)
    if (d.spec.name == name) return &d;
  return nullptr;
}

void criterion_5(Outcome& o) {
  const auto cfg = parse_config(read_text_file(kSource / "configs/flagship.json"), kSource / "configs");
  const auto r = run_experiment(cfg, Exec{4});
  const auto* lik = find_detector(r, "likelihood");
  const auto* ratio = find_detector(r, "likelihood-ratio");
  o.check(lik && ratio, "detectors missing");
  if (!lik || !ratio) return;
  o.details << "samples per side " << lik->metrics.n_in << "/" << lik->metrics.n_out << ", likelihood AUROC "
            << lik->metrics.auroc << ", ratio AUROC " << ratio->metrics.auroc;
  o.check(lik->metrics.n_in >= 10000 && lik->metrics.n_out >= 10000, "fewer than 1e4 samples per side");
  o.check(ratio->metrics.auroc >= 0.6, "ratio AUROC < 0.6");
  o.check(lik->metrics.auroc <= 0.4, "likelihood AUROC > 0.4");
}

void criterion_6(Outcome& o) {
  const std::size_t d = 16, batch = 64, n_batches = 200;
  const auto p = iso(d, 1.0), q = iso(d, 0.5, 1.0 / std::sqrt(2.0));
  const auto model = DensityModel::exact(p);
  const auto train = sample(p, 10000, 61, Exec{4});
  const auto h = typicality_train_entropy(model, train, Exec{4});
  const auto big_q = sample(q, 100000, 62, Exec{4});
  const auto detail = typicality_detail(model, h, big_q);
  o.details << "deviation " << detail.deviation << " (SE " << detail.std_error << "); ";
  o.check(std::abs(detail.deviation) <= 4 * detail.std_error, "typicality deviation outside 4 SE");
  const auto in = score_typicality_batches(model, h, sample(p, batch * n_batches, 63, Exec{4}), batch);
  const auto out = score_typicality_batches(model, h, sample(q, batch * n_batches, 64, Exec{4}), batch);
  const auto m = evaluate_detector(in, out);
  o.details << "batch AUROC " << m.auroc << "; ";
  o.check(m.auroc <= 0.6, "batch AUROC > 0.6");
  const double kl = oracle::gaussian_kl(Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(2.0)), iso_cov(d, 0.5),
                                        Eigen::VectorXd::Zero(d), iso_cov(d, 1.0));
  const double lib_kl = analytic_kl(q, p);
  o.details << "KL(Q||P) " << kl;
  o.check(std::abs(kl - 8 * oracle::kLn2) < 1e-9, "oracle KL not 8 ln 2");
  o.check(std::abs(lib_kl - kl) < 1e-9, "library KL disagrees with oracle");
}

fs::path env_dir(const char* var, const fs::path& fallback) {
  if (const char* v = std::getenv(var); v && *v) return v;
  return fallback;
}

fs::path first_existing(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {"", ".gz"})
    if (fs::exists(dir / (stem + ext))) return dir / (stem + ext);
  return {};
}

void criterion_7(Outcome& o) {
  const auto fdir = env_dir("OOD_FMNIST_DIR", kSource / "data/fashion-mnist");
  const auto mdir = env_dir("OOD_MNIST_DIR", kSource / "data/mnist");
  const auto f_train = first_existing(fdir, "train-images-idx3-ubyte");
  const auto f_test = first_existing(fdir, "t10k-images-idx3-ubyte");
  const auto m_test = first_existing(mdir, "t10k-images-idx3-ubyte");
  if (f_train.empty() || f_test.empty() || m_test.empty()) {
    o.status = Status::skip;
    o.details << "dataset files absent under " << fdir.generic_string() << " and " << mdir.generic_string()
              << " (set OOD_FMNIST_DIR and OOD_MNIST_DIR)";
    return;
  }
  const auto model = fit_pixel_categorical(load_idx({f_train, 28, 28}), 1.0, 256);
  const auto in = empirical_ledger(load_idx({f_test, 28, 28, std::nullopt, Split::test}), model, Exec{4});
  const auto out = empirical_ledger(load_idx({m_test, 28, 28, std::nullopt, Split::test}), model, Exec{4});
  o.details << "bits/dim Fashion-MNIST test " << in.bits_per_dim() << ", MNIST test " << out.bits_per_dim();
  o.check(out.bits_per_dim() < in.bits_per_dim(), "MNIST bits/dim not lower");
}

bool same(const Estimate& a, const Estimate& b) { return a.value == b.value && a.std_error == b.std_error; }

void criterion_8(Outcome& o) {
  o.details << "knn error:";
  for (std::size_t d : {1u, 2u, 4u, 8u}) {
    const auto data = sample(iso(d, 1.0), 10000, 81 + d, Exec{8});
    const auto e = knn_entropy(data, {3, 200, 91 + d}, Exec{8});
    const double truth = oracle::gaussian_entropy(iso_cov(d, 1.0));
    o.details << " d=" << d << " " << e.value - truth;
    o.check(std::abs(e.value - truth) <= 0.05, "knn entropy off by > 0.05 at d=" + std::to_string(d));
  }
  const auto mixture = Distribution::gaussian_mixture(
      {0.3, 0.7}, {Gaussian::isotropic({-2.0, 0.0}, 1.0), Gaussian::isotropic({2.0, 1.0}, 0.5)});
  const auto train = sample(mixture, 2000, 100);
  std::size_t fits = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = fit_gmm_em(train, 3, {200, 1e-7, seed, 1e-6});
    const auto& t = m.fit_meta().trajectory;
    const auto& reseeded = m.fit_meta().reseeded_at;
    for (std::size_t i = 1; i < t.size(); ++i) {
      if (std::find(reseeded.begin(), reseeded.end(), i) != reseeded.end()) continue;
      o.check(t[i] >= t[i - 1] - 1e-12 * std::abs(t[i - 1]), "EM decrease at seed " + std::to_string(seed));
    }
    ++fits;
  }
  o.details << "; EM monotone over " << fits << " seeds";
  const auto p = iso(16, 16), q = iso(16, 1);
  const auto model = DensityModel::exact(p);
  const auto mc = [&](std::size_t w) {
    const Exec ex{w};
    return std::tuple{mc_kl(mixture, iso(2, 3.0), 50000, 5, ex), mc_entropy(mixture, 50000, 6, ex),
                      decomposition_ledger(mixture, DensityModel::exact(iso(2, 3.0)), 50000, 7, ex),
                      contrast_stats(p, q, model, 50000, 8, ex), knn_entropy(sample(q, 3000, 9, ex), {3, 50, 10}, ex)};
  };
  const auto base = mc(1);
  for (std::size_t w : {2u, 8u}) {
    const auto other = mc(w);
    const bool equal = same(std::get<0>(base), std::get<0>(other)) && same(std::get<1>(base), std::get<1>(other)) &&
                       same(std::get<2>(base).avg_log_likelihood, std::get<2>(other).avg_log_likelihood) &&
                       std::get<3>(base).mu == std::get<3>(other).mu &&
                       std::get<3>(base).sigma2 == std::get<3>(other).sigma2 &&
                       same(std::get<3>(base).empirical_p_z_gt_0, std::get<3>(other).empirical_p_z_gt_0) &&
                       same(std::get<4>(base), std::get<4>(other));
    o.check(equal, "MC results differ at " + std::to_string(w) + " workers");
  }
  o.details << "; bit-identical at 1/2/8 workers";
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

void criterion_9(Outcome& o) {
  const auto cfg = parse_config(read_text_file(kSource / "configs/flagship.json"), kSource / "configs");
  const fs::path root = fs::temp_directory_path() / "ooddiag_acceptance";
  fs::remove_all(root);
  const auto first = run_experiment(cfg, Exec{2});
  const auto files_a = write_outputs(first, {root / "a", cfg.outputs.formats});
  const auto files_b = write_outputs(run_experiment(cfg, Exec{6}), {root / "b", cfg.outputs.formats});
  o.check(files_a.size() == files_b.size(), "different file lists");
  std::size_t compared = 0;
  for (std::size_t i = 0; i < std::min(files_a.size(), files_b.size()); ++i) {
    if (files_a[i].filename() == "timing.json") continue;
    o.check(files_a[i].filename() == files_b[i].filename(), "file order");
    o.check(slurp(files_a[i]) == slurp(files_b[i]), files_a[i].filename().string() + " differs");
    ++compared;
  }
  const auto golden = json::parse(slurp(kSource / "tests/golden/flagship_report.json"));
  o.check(report_to_json(first) == golden, "report differs from golden file");
  o.details << compared << " files byte-identical across two runs; report matches golden file";
  fs::remove_all(root);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"decomposition identity", criterion_1}, {"perfect-model inversion", criterion_2},
      {"chebyshev bound", criterion_3},        {"entropy cancellation", criterion_4},
      {"detector ordering", criterion_5},      {"typicality blind spot", criterion_6},
      {"real-data direction", criterion_7},    {"estimator suite", criterion_8},
      {"reproducibility", criterion_9},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.status = Status::fail;
      o.details << "[error: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const char* label = o.status == Status::pass ? "PASS" : o.status == Status::fail ? "FAIL" : "SKIP";
    failures += o.status == Status::fail;
    std::string details = o.details.str();
    while (!details.empty() && (details.back() == ' ' || details.back() == ';')) details.pop_back();
    std::printf("criterion %zu %s: %s (%s; %.1fs)\n", i + 1, criteria[i].first.c_str(), label, details.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
