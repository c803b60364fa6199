#include <random>

#include "doctest.h"
#include "druidlet/frontend.hpp"
#include "druidlet/midend.hpp"
#include "druidlet/opcodes.hpp"
#include "mock_support.hpp"

using namespace druidlet;
using druidlet::testing::randomMockState;

namespace {

const VMDefinition& vmdef() { return builtinVmDefinition(); }

Ir translatedEntry(uint8_t opcode) {
  const TableEntry& e = vmdef().table[opcode];
  REQUIRE(e.handler != nullptr);
  TranslationResult r = translateHandler(vmdef(), *e.handler, opcode);
  REQUIRE(r.ir.has_value());
  return std::move(*r.ir);
}

int countLive(const Ir& ir, IrOp op) {
  int n = 0;
  for (auto& ins : ir.instrs)
    if (!ins.dead && !ir.blocks[size_t(ins.block)].dead && ins.op == op) n++;
  return n;
}

// hand-built IR helpers
struct IrBuilder {
  Ir ir;
  int block;
  IrBuilder() {
    ir.name = "test";
    block = ir.addBlock();
    ir.entry = block;
  }
  int constant(int64_t v) {
    IrInstr i;
    i.op = IrOp::Constant;
    i.imm = v;
    return ir.append(block, i);
  }
  int op2(IrOp op, int a, int b) {
    IrInstr i;
    i.op = op;
    i.args = {a, b};
    return ir.append(block, i);
  }
  int unary(IrOp op, int a) {
    IrInstr i;
    i.op = op;
    i.args = {a};
    return ir.append(block, i);
  }
  int stage(StageKind k) {
    IrInstr i;
    i.op = IrOp::StageSource;
    i.stage = k;
    return ir.append(block, i);
  }
  void ret(int v) {
    IrInstr i;
    i.op = IrOp::Return;
    i.args = {v};
    ir.append(block, i);
  }
};

}  // namespace

TEST_CASE("constant folding: table-entry arithmetic collapses") {
  Ir ir = translatedEntry(0x01);  // pushReceiverVariable, field 1
  REQUIRE(foldConstants(ir));
  eliminateDeadCode(ir);
  CHECK(countLive(ir, IrOp::BitAnd) == 0);
  // a single slot load from a constant index remains
  int loads = 0;
  for (auto& ins : ir.instrs) {
    if (ins.dead || ins.op != IrOp::LoadSlot) continue;
    loads++;
    CHECK(ir.instr(ins.args[1]).op == IrOp::Constant);
    CHECK(ir.instr(ins.args[1]).imm == 1);
  }
  CHECK(loads == 1);
}

TEST_CASE("constant folding: identities") {
  IrBuilder b;
  int x = b.stage(StageKind::Byte1);
  int zero = b.constant(0);
  int addZero = b.op2(IrOp::Add, x, zero);
  int one = b.constant(1);
  int mulOne = b.op2(IrOp::Mul, addZero, one);
  b.ret(mulOne);
  REQUIRE(checkSsa(b.ir).empty());
  foldConstants(b.ir);
  copyPropagate(b.ir);
  eliminateDeadCode(b.ir);
  CHECK(checkSsa(b.ir).empty());
  CHECK(countLive(b.ir, IrOp::Add) == 0);
  CHECK(countLive(b.ir, IrOp::Mul) == 0);
  // the return now uses the staged byte directly
  for (auto& ins : b.ir.instrs)
    if (!ins.dead && ins.op == IrOp::Return)
      CHECK(b.ir.instr(ins.args[0]).op == IrOp::StageSource);
}

TEST_CASE("constant folding: chained offsets combine") {
  // (pc + 1) + 1 -> pc + 2, the staged jump-target shape
  IrBuilder b;
  int pc = b.stage(StageKind::BytecodePc);
  int a1 = b.op2(IrOp::Add, pc, b.constant(1));
  int a2 = b.op2(IrOp::Add, a1, b.constant(1));
  b.ret(a2);
  foldConstants(b.ir);
  copyPropagate(b.ir);
  eliminateDeadCode(b.ir);
  int adds = 0;
  for (auto& ins : b.ir.instrs)
    if (!ins.dead && ins.op == IrOp::Add) {
      adds++;
      CHECK(b.ir.instr(ins.args[1]).op == IrOp::Constant);
      CHECK(b.ir.instr(ins.args[1]).imm == 2);
    }
  CHECK(adds == 1);
}

TEST_CASE("dead code elimination") {
  IrBuilder b;
  int unused = b.constant(99);
  (void)unused;
  int v = b.constant(7);
  int obj = b.unary(IrOp::LoadReceiver, 0);
  b.ir.instr(obj).args.clear();
  IrInstr store;
  store.op = IrOp::StoreSlot;
  store.args = {obj, b.constant(0), v};
  b.ir.append(b.block, store);
  b.ret(v);
  REQUIRE(checkSsa(b.ir).empty());
  eliminateDeadCode(b.ir);
  CHECK(checkSsa(b.ir).empty());
  // the unused constant dies, the store is an effect and stays
  bool deadConst = false;
  for (auto& ins : b.ir.instrs)
    if (ins.dead && ins.op == IrOp::Constant) deadConst = true;
  CHECK(deadConst);
  CHECK(countLive(b.ir, IrOp::StoreSlot) == 1);
}

TEST_CASE("branch folding removes the untaken arm and its phis") {
  // if (1) then x=10 else x=20; return x
  IrBuilder b;
  int cond = b.constant(1);
  int thenB = b.ir.addBlock();
  int elseB = b.ir.addBlock();
  int mergeB = b.ir.addBlock();
  IrInstr br;
  br.op = IrOp::Branch;
  br.args = {cond};
  b.ir.append(b.block, br);
  b.ir.blocks[size_t(b.block)].succs = {thenB, elseB};
  b.ir.blocks[size_t(thenB)].preds = {b.block};
  b.ir.blocks[size_t(elseB)].preds = {b.block};
  b.block = thenB;
  int v10 = b.constant(10);
  IrInstr j1;
  j1.op = IrOp::Jump;
  b.ir.append(thenB, j1);
  b.ir.blocks[size_t(thenB)].succs = {mergeB};
  b.block = elseB;
  int v20 = b.constant(20);
  IrInstr j2;
  j2.op = IrOp::Jump;
  b.ir.append(elseB, j2);
  b.ir.blocks[size_t(elseB)].succs = {mergeB};
  b.ir.blocks[size_t(mergeB)].preds = {thenB, elseB};
  b.block = mergeB;
  IrInstr phi;
  phi.op = IrOp::Phi;
  phi.args = {v10, v20};
  int phiId = b.ir.append(mergeB, phi);
  b.ret(phiId);
  REQUIRE(checkSsa(b.ir).empty());

  simplifyBranches(b.ir);
  eliminateDeadCode(b.ir);
  copyPropagate(b.ir);
  eliminateDeadCode(b.ir);
  CHECK(checkSsa(b.ir).empty());
  CHECK(b.ir.blocks[size_t(elseB)].dead);
  CHECK(countLive(b.ir, IrOp::Phi) == 0);
  MockState st;
  EvalResult r = irEval(b.ir, st);
  CHECK(r.outcome.kind == EvalOutcome::Kind::Return);
  CHECK(r.outcome.value == 10);
}

TEST_CASE("GVN merges dominated pure computations, never loads across stores") {
  IrBuilder b;
  int x = b.stage(StageKind::Byte1);
  int y = b.stage(StageKind::Byte2);
  int s1 = b.op2(IrOp::Add, x, y);
  int s2 = b.op2(IrOp::Add, x, y);
  int sum = b.op2(IrOp::Add, s1, s2);
  b.ret(sum);
  REQUIRE(globalValueNumbering(b.ir));
  copyPropagate(b.ir);
  eliminateDeadCode(b.ir);
  CHECK(countLive(b.ir, IrOp::Add) == 2);  // one of the equal adds merged

  IrBuilder c;
  int obj = c.unary(IrOp::LoadReceiver, 0);
  c.ir.instr(obj).args.clear();
  int idx = c.constant(0);
  int l1 = c.unary(IrOp::LoadSlot, obj);
  c.ir.instr(l1).args = {obj, idx};
  IrInstr store;
  store.op = IrOp::StoreSlot;
  store.args = {obj, idx, c.constant(9)};
  c.ir.append(c.block, store);
  int l2 = c.unary(IrOp::LoadSlot, obj);
  c.ir.instr(l2).args = {obj, idx};
  int sum2 = c.op2(IrOp::Add, l1, l2);
  c.ret(sum2);
  globalValueNumbering(c.ir);
  copyPropagate(c.ir);
  eliminateDeadCode(c.ir);
  CHECK(countLive(c.ir, IrOp::LoadSlot) == 2);
}

TEST_CASE("the conditional-jump handler keeps its two object comparisons") {
  Ir ir = translatedEntry(0x78);
  PipelineResult pr = runPipeline(ir);
  CHECK(pr.fixpoint);
  CHECK(pr.ssaProblems.empty());
  CHECK(countLive(ir, IrOp::Compare) == 2);
}

TEST_CASE("pipeline reaches a fixpoint and is idempotent on all builtin IRs") {
  std::mt19937_64 rng(7);
  for (int op = 0; op <= 0xFF; op++) {
    const TableEntry& e = vmdef().table[op];
    if (!e.handler) continue;
    TranslationResult r = translateHandler(vmdef(), *e.handler, uint8_t(op));
    if (!r.ir) continue;
    Ir ir = std::move(*r.ir);

    // behavior is preserved across the pipeline
    MockState st = randomMockState(rng);
    st.opcode = uint8_t(op);
    EvalResult before = irEval(ir, st);

    PipelineResult pr = runPipeline(ir);
    CHECK(pr.fixpoint);
    CHECK(pr.ssaProblems.empty());

    EvalResult after = irEval(ir, st);
    CHECK(before.effects == after.effects);
    CHECK(before.outcome.kind == after.outcome.kind);
    CHECK(before.outcome.value == after.outcome.value);

    std::string once = printIr(ir);
    PipelineResult pr2 = runPipeline(ir);
    CHECK(pr2.fixpoint);
    CHECK(pr2.rounds == 1);
    CHECK(printIr(ir) == once);
  }
  for (auto& [id, def] : vmdef().primitiveHandlers) {
    TranslationResult r = translatePrimitive(vmdef(), *def);
    Ir ir = std::move(*r.ir);
    PipelineResult pr = runPipeline(ir);
    CHECK(pr.fixpoint);
    CHECK(pr.ssaProblems.empty());
    std::string once = printIr(ir);
    runPipeline(ir);
    CHECK(printIr(ir) == once);
  }
}

TEST_CASE("each pass preserves evaluation on randomized IRs") {
  // random but valid straight-line/diamond graphs over a shared mock shape
  std::mt19937_64 rng(2024);
  auto randomIr = [&](std::mt19937_64& r) {
    IrBuilder b;
    std::vector<int> pool;
    pool.push_back(b.constant(int64_t(r() % 64)));
    pool.push_back(b.constant(int64_t(r() % 64)));
    pool.push_back(b.stage(StageKind::Byte1));
    pool.push_back(b.stage(StageKind::Byte2));
    pool.push_back(b.stage(StageKind::BytecodePc));
    auto pick = [&]() { return pool[r() % pool.size()]; };
    int ops = 3 + int(r() % 8);
    for (int i = 0; i < ops; i++) {
      switch (r() % 8) {
        case 0: pool.push_back(b.op2(IrOp::Add, pick(), pick())); break;
        case 1: pool.push_back(b.op2(IrOp::Sub, pick(), pick())); break;
        case 2: pool.push_back(b.op2(IrOp::Mul, pick(), pick())); break;
        case 3: pool.push_back(b.op2(IrOp::BitAnd, pick(), pick())); break;
        case 4: pool.push_back(b.constant(int64_t(r() % 100) - 50)); break;
        case 5: {
          IrInstr push;
          push.op = IrOp::StackPush;
          push.args = {pick()};
          b.ir.append(b.block, push);
          break;
        }
        case 6: {
          // a small diamond merging a phi
          IrInstr cmp;
          cmp.op = IrOp::Compare;
          cmp.cond = IrCond::Lt;
          cmp.args = {pick(), pick()};
          int condV = b.ir.append(b.block, cmp);
          int thenB = b.ir.addBlock(), elseB = b.ir.addBlock(), mergeB = b.ir.addBlock();
          IrInstr br;
          br.op = IrOp::Branch;
          br.args = {condV};
          b.ir.append(b.block, br);
          b.ir.blocks[size_t(b.block)].succs = {thenB, elseB};
          b.ir.blocks[size_t(thenB)].preds = {b.block};
          b.ir.blocks[size_t(elseB)].preds = {b.block};
          int from = b.block;
          b.block = thenB;
          int tv = b.op2(IrOp::Add, pick(), pick());
          IrInstr j1;
          j1.op = IrOp::Jump;
          b.ir.append(thenB, j1);
          b.ir.blocks[size_t(thenB)].succs = {mergeB};
          b.block = elseB;
          int ev = b.op2(IrOp::Sub, pick(), pick());
          IrInstr j2;
          j2.op = IrOp::Jump;
          b.ir.append(elseB, j2);
          b.ir.blocks[size_t(elseB)].succs = {mergeB};
          b.ir.blocks[size_t(mergeB)].preds = {thenB, elseB};
          b.block = mergeB;
          IrInstr phi;
          phi.op = IrOp::Phi;
          phi.args = {tv, ev};
          pool.push_back(b.ir.append(mergeB, phi));
          (void)from;
          break;
        }
        default: pool.push_back(b.op2(IrOp::ShiftLeft, pick(), b.constant(int64_t(r() % 4)))); break;
      }
    }
    b.ret(pick());
    return std::move(b.ir);
  };

  const char* passNames[] = {"fold", "copyprop", "gvn", "branch-simplify", "dce"};
  int perPass[5] = {0, 0, 0, 0, 0};
  for (int trial = 0; trial < 1250; trial++) {
    Ir ir = randomIr(rng);
    REQUIRE(checkSsa(ir).empty());
    MockState st = randomMockState(rng);
    int passIdx = trial % 5;
    EvalResult before = irEval(ir, st);
    switch (passIdx) {
      case 0: foldConstants(ir); break;
      case 1: copyPropagate(ir); break;
      case 2: globalValueNumbering(ir); break;
      case 3: simplifyBranches(ir); break;
      case 4: eliminateDeadCode(ir); break;
    }
    auto problems = checkSsa(ir);
    for (auto& p : problems) MESSAGE(passNames[passIdx], ": ", p);
    REQUIRE(problems.empty());
    EvalResult after = irEval(ir, st);
    CHECK(before.effects == after.effects);
    CHECK(before.outcome.kind == after.outcome.kind);
    CHECK(before.outcome.value == after.outcome.value);
    perPass[passIdx]++;
  }
  for (int i = 0; i < 5; i++) CHECK(perPass[i] >= 250);
}
