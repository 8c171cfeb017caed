#include "doctest.h"
#include "fixtures.hpp"

using namespace scrcl;
using namespace scrcl::testing;

TEST_CASE("total objective gradients match central differences") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const TinyProblem p = tiny_problem(seed);
        const auto r = ad::grad_check(total_fn(p), param_values(p.params), 1e-5);
        INFO("seed " << seed << " param " << p.params.named()[r.param].first << " (" << r.row << "," << r.col << ")");
        CHECK(r.max_rel_error < 1e-4);
    }
}
