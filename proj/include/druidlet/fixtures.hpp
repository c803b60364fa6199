#pragma once

#include <string>
#include <vector>

namespace druidlet {

// Classes and primitive-method bindings every program is expected to carry:
// SmallInteger arithmetic/comparison, Array access, and array allocation on
// UndefinedObject. Programs append their own classes and may reopen these.
std::string standardPrelude();

struct Fixture {
  std::string name;
  std::string text;
  int64_t expectedResult;  // small-integer result of the entry method
  bool loopDominated = false;
};

// The benchmark programs. Sizes are picked so a full tier comparison stays
// in a desk-scale time budget.
const std::vector<Fixture>& benchmarkFixtures();

// Named lookup; throws when absent.
const Fixture& fixtureNamed(const std::string& name);

std::string fibProgram(int n);
std::string loopSumProgram(int64_t n);

}  // namespace druidlet
