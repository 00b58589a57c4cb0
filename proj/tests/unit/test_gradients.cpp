// Loss-level gradient checks, 24 random small problems per loss.
#include <doctest.h>

#include "gradient_cases.hpp"

using namespace macflow::testing;

TEST_CASE("flow-BC loss gradient") {
  const double worst = flow_bc_grad_error(24, 101);
  MESSAGE("worst relative error " << worst);
  CHECK(worst <= 1e-4);
}

TEST_CASE("critic TD loss gradient") {
  const double worst = critic_td_grad_error(24, 202);
  MESSAGE("worst relative error " << worst);
  CHECK(worst <= 1e-4);
}

TEST_CASE("actor total loss gradient (Q term + alpha * distill)") {
  const double worst = actor_total_grad_error(24, 303);
  MESSAGE("worst relative error " << worst);
  CHECK(worst <= 1e-4);
}
