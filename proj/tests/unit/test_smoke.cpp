#include <catch2/catch_amalgamated.hpp>

#include "nsr/scene.hpp"
#include "nsr/synthetic.hpp"
#include "nsr/trainer.hpp"
#include "nsr/mesher.hpp"
#include "nsr/metrics.hpp"

TEST_CASE("smoke: headers compile and a field evaluates") {
  nsr::NeuralField<double> f(nsr::FieldConfig::tiny(), 7);
  REQUIRE(std::isfinite(f.sdf(nsr::Vec3d(0.1, 0.2, 0.3))));
}
