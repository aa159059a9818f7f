#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace rgcd {

struct GradCheckEntry {
  std::string name;  // "autodiff.<op>" or a composite such as "student.f_theta"
  double max_rel_error = 0.0;
  std::size_t checked = 0;  // gradient entries compared, summed over seeds
  std::size_t seeds = 0;
};

// Finite-difference checks of every primitive and of f_theta, j_img, j_vid,
// cd_loss and the total loss on a reduced network, over `seeds` draws each.
std::vector<GradCheckEntry> run_gradcheck_suite(std::size_t seeds, std::uint64_t base_seed = 0);

}  // namespace rgcd
