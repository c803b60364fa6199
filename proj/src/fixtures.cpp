#include "druidlet/fixtures.hpp"

#include <sstream>
#include <stdexcept>

namespace druidlet {

std::string standardPrelude() {
  return R"(.class SmallInteger id=0
.method + sel=1 args=1 temps=0 prim=1
  returnReceiver
.method - sel=2 args=1 temps=0 prim=2
  returnReceiver
.method * sel=3 args=1 temps=0 prim=3
  returnReceiver
.method = sel=4 args=1 temps=0 prim=9
  pushFalse
  returnTop
.method < sel=5 args=1 temps=0 prim=4
  pushFalse
  returnTop
.class Array id=4
.method at: sel=6 args=1 temps=0 prim=5
  returnReceiver
.method at:put: sel=8 args=2 temps=0 prim=8
  returnReceiver
.method size sel=7 args=0 temps=0 prim=6
  returnReceiver
.class UndefinedObject id=1
.method newArray: sel=9 args=1 temps=0 prim=7
  pushNil
  returnTop
.method size sel=7 args=0 temps=0 prim=6
  returnReceiver
)";
}

namespace {

// while (tempA < limitExpr): jumpTrue over a longJump to the exit label.
void whileHeader(std::ostringstream& out, const std::string& condLines,
                 const std::string& loopLabel, const std::string& exitLabel) {
  out << loopLabel << ":\n" << condLines;
  out << "  jumpTrue 3\n";
  out << "  longJump " << exitLabel << "\n";
}

void whileFooter(std::ostringstream& out, const std::string& loopLabel,
                 const std::string& exitLabel) {
  out << "  longJump " << loopLabel << "\n";
  out << exitLabel << ":\n";
}

}  // namespace

std::string fibProgram(int n) {
  std::ostringstream out;
  out << standardPrelude();
  out << ".class SmallInteger id=0\n";
  out << ".method fib: sel=101 args=1 temps=0\n";
  out << "  pushTemp 0\n  pushConstant 2\n  lessSend\n  jumpFalse 2\n";
  out << "  pushTemp 0\n  returnTop\n";
  out << "  pushConstant 0\n  pushTemp 0\n  pushConstant 1\n  subSend\n  send fib: 1\n";
  out << "  pushConstant 0\n  pushTemp 0\n  pushConstant 2\n  subSend\n  send fib: 1\n";
  out << "  addSend\n  returnTop\n";
  out << ".class Main id=16\n";
  out << ".method main sel=100 args=0 temps=0\n";
  out << "  pushConstant 0\n  pushConstant " << n << "\n  send fib: 1\n  returnTop\n";
  out << ".entry Main main\n";
  return out.str();
}

std::string loopSumProgram(int64_t n) {
  std::ostringstream out;
  out << standardPrelude();
  out << ".class Main id=16\n";
  out << ".method main sel=100 args=0 temps=2\n";
  out << "  pushConstant 0\n  storePopTemp 0\n";  // i
  out << "  pushConstant 0\n  storePopTemp 1\n";  // sum
  whileHeader(out, "  pushTemp 0\n  pushConstant " + std::to_string(n) + "\n  lessSend\n",
              "loop", "exit");
  out << "  pushTemp 1\n  pushTemp 0\n  addSend\n  storePopTemp 1\n";
  out << "  pushTemp 0\n  pushConstant 1\n  addSend\n  storePopTemp 0\n";
  whileFooter(out, "loop", "exit");
  out << "  pushTemp 1\n  returnTop\n";
  out << ".entry Main main\n";
  return out.str();
}

namespace {

std::string arrayFillProgram(int64_t iterations, int arraySize) {
  std::ostringstream out;
  out << standardPrelude();
  out << ".class Main id=16\n";
  out << ".method main sel=100 args=0 temps=1\n";
  out << "  pushConstant 0\n  storePopTemp 0\n";
  whileHeader(out,
              "  pushTemp 0\n  pushConstant " + std::to_string(iterations) +
                  "\n  lessSend\n",
              "loop", "exit");
  out << "  pushNewArray " << arraySize << "\n  popTop\n";
  out << "  pushTemp 0\n  pushConstant 1\n  addSend\n  storePopTemp 0\n";
  whileFooter(out, "loop", "exit");
  out << "  pushTemp 0\n  returnTop\n";
  out << ".entry Main main\n";
  return out.str();
}

std::string sieveProgram(int64_t n) {
  // temps: t0 flags, t1 i, t2 j, t3 count
  std::ostringstream out;
  std::string N = std::to_string(n);
  out << standardPrelude();
  out << ".class Main id=16\n";
  out << ".method main sel=100 args=0 temps=4\n";
  out << "  pushNil\n  pushConstant " << N << "\n  send newArray: 1\n  storePopTemp 0\n";
  // clear flags[1..N] to 0
  out << "  pushConstant 1\n  storePopTemp 1\n";
  whileHeader(out, "  pushTemp 1\n  pushConstant " + N + "\n  lessSend\n", "clr", "clrx");
  out << "  pushTemp 0\n  pushTemp 1\n  pushConstant 0\n  send at:put: 2\n  popTop\n";
  out << "  pushTemp 1\n  pushConstant 1\n  addSend\n  storePopTemp 1\n";
  whileFooter(out, "clr", "clrx");
  out << "  pushConstant 0\n  storePopTemp 3\n";
  out << "  pushConstant 2\n  storePopTemp 1\n";
  whileHeader(out, "  pushTemp 1\n  pushConstant " + N + "\n  lessSend\n", "outer", "outerx");
  // if flags[i] = 0 then mark multiples
  out << "  pushTemp 0\n  pushTemp 1\n  send at: 1\n  pushConstant 0\n  eqSend\n";
  out << "  jumpTrue 3\n  longJump notprime\n";
  out << "  pushTemp 3\n  pushConstant 1\n  addSend\n  storePopTemp 3\n";
  out << "  pushTemp 1\n  pushTemp 1\n  mulSend\n  storePopTemp 2\n";
  whileHeader(out, "  pushTemp 2\n  pushConstant " + N + "\n  lessSend\n", "inner", "innerx");
  out << "  pushTemp 0\n  pushTemp 2\n  pushConstant 1\n  send at:put: 2\n  popTop\n";
  out << "  pushTemp 2\n  pushTemp 1\n  addSend\n  storePopTemp 2\n";
  whileFooter(out, "inner", "innerx");
  out << "notprime:\n";
  out << "  pushTemp 1\n  pushConstant 1\n  addSend\n  storePopTemp 1\n";
  whileFooter(out, "outer", "outerx");
  out << "  pushTemp 3\n  returnTop\n";
  out << ".entry Main main\n";
  return out.str();
}

std::string bubbleSortProgram(int k) {
  // temps: t0 arr, t1 i, t2 j, t3 a, t4 b, t5 sum
  std::ostringstream out;
  std::string K = std::to_string(k);
  out << standardPrelude();
  out << ".class Main id=16\n";
  out << ".method main sel=100 args=0 temps=6\n";
  out << "  pushNil\n  pushConstant " << K << "\n  send newArray: 1\n  storePopTemp 0\n";
  // arr[i] := K - i, the worst case for bubble sort
  out << "  pushConstant 1\n  storePopTemp 1\n";
  whileHeader(out, "  pushTemp 1\n  pushConstant " + std::to_string(k + 1) + "\n  lessSend\n",
              "fill", "fillx");
  out << "  pushTemp 0\n  pushTemp 1\n  pushConstant " << K
      << "\n  pushTemp 1\n  subSend\n  pushConstant 1\n  addSend\n  send at:put: 2\n  popTop\n";
  out << "  pushTemp 1\n  pushConstant 1\n  addSend\n  storePopTemp 1\n";
  whileFooter(out, "fill", "fillx");
  // bubble sort
  out << "  pushConstant 0\n  storePopTemp 1\n";
  whileHeader(out,
              "  pushTemp 1\n  pushConstant " + std::to_string(k - 1) + "\n  lessSend\n",
              "outer", "outerx");
  out << "  pushConstant 1\n  storePopTemp 2\n";
  whileHeader(out,
              "  pushTemp 2\n  pushConstant " + K + "\n  pushTemp 1\n  subSend\n  lessSend\n",
              "inner", "innerx");
  out << "  pushTemp 0\n  pushTemp 2\n  send at: 1\n  storePopTemp 3\n";
  out << "  pushTemp 0\n  pushTemp 2\n  pushConstant 1\n  addSend\n  send at: 1\n  storePopTemp 4\n";
  out << "  pushTemp 4\n  pushTemp 3\n  lessSend\n";
  out << "  jumpTrue 3\n  longJump noswap\n";
  out << "  pushTemp 0\n  pushTemp 2\n  pushTemp 4\n  send at:put: 2\n  popTop\n";
  out << "  pushTemp 0\n  pushTemp 2\n  pushConstant 1\n  addSend\n  pushTemp 3\n  send at:put: 2\n  popTop\n";
  out << "noswap:\n";
  out << "  pushTemp 2\n  pushConstant 1\n  addSend\n  storePopTemp 2\n";
  whileFooter(out, "inner", "innerx");
  out << "  pushTemp 1\n  pushConstant 1\n  addSend\n  storePopTemp 1\n";
  whileFooter(out, "outer", "outerx");
  // weighted checksum: sum of i * arr[i]
  out << "  pushConstant 0\n  storePopTemp 5\n";
  out << "  pushConstant 1\n  storePopTemp 1\n";
  whileHeader(out, "  pushTemp 1\n  pushConstant " + std::to_string(k + 1) + "\n  lessSend\n",
              "sum", "sumx");
  out << "  pushTemp 5\n  pushTemp 1\n  pushTemp 0\n  pushTemp 1\n  send at: 1\n  mulSend\n  addSend\n  storePopTemp 5\n";
  out << "  pushTemp 1\n  pushConstant 1\n  addSend\n  storePopTemp 1\n";
  whileFooter(out, "sum", "sumx");
  out << "  pushTemp 5\n  returnTop\n";
  out << ".entry Main main\n";
  return out.str();
}

std::string binaryTreesProgram(int depth, int reps) {
  // build: on SmallInteger returns a nested array tree; check is sent
  // polymorphically to array nodes and small-integer leaves.
  std::ostringstream out;
  out << standardPrelude();
  out << ".class SmallInteger id=0\n";
  out << ".method build: sel=102 args=1 temps=1\n";
  out << "  pushTemp 0\n  pushConstant 0\n  eqSend\n  jumpFalse 2\n";
  out << "  pushConstant 0\n  returnTop\n";
  out << "  pushNewArray 2\n  storePopTemp 1\n";
  out << "  pushTemp 1\n";
  out << "  pushConstant 1\n";
  out << "  pushConstant 0\n  pushTemp 0\n  pushConstant 1\n  subSend\n  send build: 1\n";
  out << "  send at:put: 2\n  popTop\n";
  out << "  pushTemp 1\n";
  out << "  pushConstant 2\n";
  out << "  pushConstant 0\n  pushTemp 0\n  pushConstant 1\n  subSend\n  send build: 1\n";
  out << "  send at:put: 2\n  popTop\n";
  out << "  pushTemp 1\n  returnTop\n";
  out << ".method check sel=103 args=0 temps=0\n";
  out << "  pushConstant 1\n  returnTop\n";
  out << ".class Array id=4\n";
  out << ".method check sel=103 args=0 temps=0\n";
  out << "  pushConstant 1\n";
  out << "  pushRcvrVar 0\n  send check 0\n  addSend\n";
  out << "  pushRcvrVar 1\n  send check 0\n  addSend\n";
  out << "  returnTop\n";
  out << ".class Main id=16\n";
  out << ".method main sel=100 args=0 temps=2\n";
  out << "  pushConstant 0\n  storePopTemp 0\n";  // r
  out << "  pushConstant 0\n  storePopTemp 1\n";  // total
  whileHeader(out, "  pushTemp 0\n  pushConstant " + std::to_string(reps) + "\n  lessSend\n",
              "loop", "exit");
  out << "  pushTemp 1\n";
  out << "  pushConstant 0\n  pushConstant " << depth << "\n  send build: 1\n";
  out << "  send check 0\n  addSend\n  storePopTemp 1\n";
  out << "  pushTemp 0\n  pushConstant 1\n  addSend\n  storePopTemp 0\n";
  whileFooter(out, "loop", "exit");
  out << "  pushTemp 1\n  returnTop\n";
  out << ".entry Main main\n";
  return out.str();
}

int64_t sieveExpected(int64_t n) {
  std::vector<bool> composite(size_t(n + 1), false);
  int64_t count = 0;
  for (int64_t i = 2; i < n; i++) {
    if (!composite[size_t(i)]) {
      count++;
      for (int64_t j = i * i; j < n; j += i) composite[size_t(j)] = true;
    }
  }
  return count;
}

int64_t fibExpected(int n) {
  int64_t a = 0, b = 1;
  for (int i = 0; i < n; i++) {
    int64_t t = a + b;
    a = b;
    b = t;
  }
  return a;
}

std::vector<Fixture> buildFixtures() {
  std::vector<Fixture> fixtures;
  {
    int n = 22;
    fixtures.push_back({"fib", fibProgram(n), fibExpected(n), false});
  }
  {
    int64_t n = 1200000;
    fixtures.push_back({"loop-sum", loopSumProgram(n), n * (n - 1) / 2, true});
  }
  {
    int64_t iters = 12000;
    fixtures.push_back({"array-fill", arrayFillProgram(iters, 100), iters, true});
  }
  {
    int64_t n = 10000;
    fixtures.push_back({"sieve", sieveProgram(n), sieveExpected(n), true});
  }
  {
    int k = 220;
    int64_t sum = 0;
    for (int64_t i = 1; i <= k; i++) sum += i * i;
    fixtures.push_back({"bubble-sort", bubbleSortProgram(k), sum, true});
  }
  {
    int depth = 9, reps = 60;
    fixtures.push_back({"binarytrees-lite", binaryTreesProgram(depth, reps),
                        int64_t(reps) * ((int64_t(1) << (depth + 1)) - 1), false});
  }
  return fixtures;
}

}  // namespace

const std::vector<Fixture>& benchmarkFixtures() {
  static const std::vector<Fixture> fixtures = buildFixtures();
  return fixtures;
}

const Fixture& fixtureNamed(const std::string& name) {
  for (auto& f : benchmarkFixtures())
    if (f.name == name) return f;
  throw std::runtime_error("no such fixture: " + name);
}

}  // namespace druidlet
