// Writes a synthetic campaign: a household candidate file and per-round
// observation files for households drawn from it. Usage:
//   synthetic_campaign <out-dir> [households=600] [seed=3]

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "geodesign/designs.hpp"
#include "geodesign/random.hpp"
#include "geodesign/simulate.hpp"

int main(int argc, char** argv) {
  using namespace geodesign;
  if (argc < 2) {
    std::cerr << "usage: synthetic_campaign <out-dir> [households] [seed]\n";
    return 2;
  }
  const std::filesystem::path out = argv[1];
  const std::size_t n = argc > 2 ? std::stoul(argv[2]) : 600;
  const std::uint64_t seed = argc > 3 ? std::stoull(argv[3]) : 3;
  std::filesystem::create_directories(out);

  // Households scattered over a 4 km x 3 km area, in km.
  Rng rng(derive_seed(seed, 0));
  std::uniform_real_distribution<double> ux(0.0, 4.0), uy(0.0, 3.0);
  std::vector<Location> homes(n);
  for (auto& h : homes) h = {ux(rng), uy(rng)};

  const ModelSpec truth{{-1.0}, {1.0, 0.6, 1.5}, 0.0};
  const auto field = simulate_field(homes, truth, derive_seed(seed, 1));

  std::ofstream cand(out / "candidates.csv");
  cand.precision(10);
  cand << "id,x,y\n";
  for (std::size_t i = 0; i < n; ++i) cand << "hh" << i << ',' << homes[i].x << ',' << homes[i].y << '\n';

  const auto initial = inhibitory_design(Region(homes), 72, 0.15, derive_seed(seed, 2));
  std::uniform_int_distribution<int> size(1, 8);
  std::ofstream obs(out / "round1.csv");
  obs << "household_id,tested,positive\n";
  for (auto idx : initial.candidate_index) {
    const int m = size(rng);
    const double p = 1.0 / (1.0 + std::exp(-(truth.beta[0] + field.values[idx])));
    std::binomial_distribution<int> pos(m, p);
    obs << "hh" << idx << ',' << m << ',' << pos(rng) << '\n';
  }

  // Latent prevalence for every household, so later rounds can be scored.
  std::ofstream lat(out / "truth.csv");
  lat.precision(10);
  lat << "id,logit_prevalence\n";
  for (std::size_t i = 0; i < n; ++i) lat << "hh" << i << ',' << truth.beta[0] + field.values[i] << '\n';

  std::cout << "wrote " << (out / "candidates.csv").string() << ", round1.csv (72 households), truth.csv\n";
}
