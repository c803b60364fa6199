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

Ir translated(const std::string& handlerName, uint8_t opcode) {
  const HandlerDef* def = vmdef().bytecodeHandlerNamed(handlerName);
  REQUIRE(def != nullptr);
  TranslationResult r = translateHandler(vmdef(), *def, opcode);
  for (auto& d : r.diagnostics) MESSAGE(d.path, ": ", d.message);
  REQUIRE(r.ir.has_value());
  return std::move(*r.ir);
}

Ir translatedPrim(int id) {
  const HandlerDef* def = vmdef().primitiveById(id);
  REQUIRE(def != nullptr);
  TranslationResult r = translatePrimitive(vmdef(), *def);
  for (auto& d : r.diagnostics) MESSAGE(d.path, ": ", d.message);
  REQUIRE(r.ir.has_value());
  return std::move(*r.ir);
}

int countLiveOps(const Ir& ir, IrOp op) {
  int n = 0;
  for (size_t i = 0; i < ir.instrs.size(); i++) {
    const IrInstr& ins = ir.instrs[i];
    if (!ins.dead && !ir.blocks[size_t(ins.block)].dead && ins.op == op) n++;
  }
  return n;
}

}  // namespace

TEST_CASE("dup translates to a stack read feeding a push") {
  Ir ir = translated("duplicateTop", kOpDup);
  CHECK(checkSsa(ir).empty());
  bool found = false;
  for (auto& ins : ir.instrs) {
    if (ins.op == IrOp::StackPush && ir.instr(ins.args[0]).op == IrOp::StackRead &&
        ir.instr(ins.args[0]).imm == 0)
      found = true;
  }
  CHECK(found);
  CHECK(countLiveOps(ir, IrOp::EndHandler) == 1);
}

TEST_CASE("pushReceiverVariable keeps the table-entry mask before optimization") {
  Ir ir = translated("pushReceiverVariable", 0x01);
  bool maskOnEntryConstant = false;
  for (auto& ins : ir.instrs) {
    if (ins.op != IrOp::BitAnd) continue;
    const IrInstr& a = ir.instr(ins.args[0]);
    const IrInstr& b = ir.instr(ins.args[1]);
    if (a.op == IrOp::Constant && a.imm == 1 && b.op == IrOp::Constant && b.imm == 15)
      maskOnEntryConstant = true;
  }
  CHECK(maskOnEntryConstant);
}

TEST_CASE("druidIgnore bodies contribute no IR, interpreterIgnore bodies do") {
  // the special-send fast path is druidIgnore'd: no checked add, no stack
  // reads survive translation, just the send
  Ir ir = translated("bytecodePrimAdd", kOpPrimAddSend);
  CHECK(countLiveOps(ir, IrOp::CheckedAdd) == 0);
  CHECK(countLiveOps(ir, IrOp::StackRead) == 0);
  CHECK(countLiveOps(ir, IrOp::Send) == 1);

  ParsedDefinition p = parseHandlerListing(
      "(bytecode-handler withIgnore"
      " (interpreterIgnore (let x (add (byte1) 1)))"
      " (fetchNextBytecode))");
  REQUIRE(validateHandler(*p.handlers[0], vmdef().helpers).empty());
  TranslationResult r = translateHandler(vmdef(), *p.handlers[0], kOpPushNewArray);
  REQUIRE(r.ir.has_value());
  CHECK(countLiveOps(*r.ir, IrOp::Add) >= 1);
}

TEST_CASE("conditional translation merges with a phi where bindings diverge") {
  ParsedDefinition p = parseHandlerListing(
      "(bytecode-handler diverge"
      " (let x 1)"
      " (if (eq (stackTop) (trueObject)) (then (set x 2)) (else (set x 3)))"
      " (push x)"
      " (fetchNextBytecode))");
  REQUIRE(validateHandler(*p.handlers[0], vmdef().helpers).empty());
  TranslationResult r = translateHandler(vmdef(), *p.handlers[0], 0x50);
  REQUIRE(r.ir.has_value());
  CHECK(checkSsa(*r.ir).empty());
  CHECK(countLiveOps(*r.ir, IrOp::Phi) == 1);
  CHECK(countLiveOps(*r.ir, IrOp::Branch) == 1);
}

TEST_CASE("primitiveAdd translation: receiver check dropped, argument check kept") {
  Ir ir = translatedPrim(1);
  CHECK(checkSsa(ir).empty());
  // exactly one tag test (the argument's); the receiver check folded away
  int tagTests = 0;
  for (auto& ins : ir.instrs)
    if (!ins.dead && ins.op == IrOp::Compare && ins.cond == IrCond::TestMaskNonZero)
      tagTests++;
  CHECK(tagTests == 1);
  CHECK(countLiveOps(ir, IrOp::CheckedAdd) == 1);
  CHECK(countLiveOps(ir, IrOp::PrimFail) >= 1);
  CHECK(countLiveOps(ir, IrOp::Return) == 1);

  const HandlerDef* def = vmdef().primitiveById(1);
  TranslationResult r = translatePrimitive(vmdef(), *def);
  CHECK(r.installClassGuard == kClassSmallInteger);
}

TEST_CASE("primitiveSize: the exit-point branch leaves through the fail path") {
  Ir ir = translatedPrim(6);
  CHECK(checkSsa(ir).empty());
  // fast path computes the slot count; the exit branch becomes a fail
  CHECK(countLiveOps(ir, IrOp::LoadNumSlots) == 1);
  CHECK(countLiveOps(ir, IrOp::PrimFail) >= 1);
}

TEST_CASE("stack access beyond the primitive convention is rejected") {
  ParsedDefinition p = parseHandlerListing(
      "(primitive-handler badPrim (annotations (numberOfArguments 1))"
      " (popThenPush 2 (stackValue 2)))");
  REQUIRE(validateHandler(*p.handlers[0], vmdef().helpers).empty());
  TranslationResult r = translatePrimitive(vmdef(), *p.handlers[0]);
  CHECK_FALSE(r.ir.has_value());
  REQUIRE_FALSE(r.diagnostics.empty());
  CHECK(r.diagnostics[0].message.find("convention") != std::string::npos);
}

TEST_CASE("booleanCheat has no translation rule") {
  const HandlerDef* def = vmdef().bytecodeHandlerNamed("bytecodePrimIdentical");
  TranslationResult r = translateHandler(vmdef(), *def, kOpPrimIdenticalSend);
  CHECK_FALSE(r.ir.has_value());
  bool mentioned = false;
  for (auto& d : r.diagnostics)
    mentioned |= d.message.find("booleanCheat") != std::string::npos;
  CHECK(mentioned);
}

TEST_CASE("send intrinsics translate to one send instruction") {
  Ir eq = translated("bytecodePrimEqual", kOpPrimEqSend);
  REQUIRE(countLiveOps(eq, IrOp::Send) == 1);
  for (auto& ins : eq.instrs) {
    if (ins.dead || ins.op != IrOp::Send) continue;
    CHECK(ins.imm == 1);
    CHECK(eq.instr(ins.args[0]).op == IrOp::Constant);
    CHECK(eq.instr(ins.args[0]).imm == kSelectorEq);
  }
  CHECK(eq.annotations.hasSend);

  Ir lit = translated("sendLiteralSelector", kOpSend);
  REQUIRE(countLiveOps(lit, IrOp::Send) == 1);
  // staged literal-selector load feeds the send
  CHECK(countLiveOps(lit, IrOp::StageHint) == 1);
}

TEST_CASE("every builtin table entry translates to valid SSA or is marked uncompilable") {
  int translatedCount = 0, uncompilable = 0;
  for (int op = 0; op <= 0xFF; op++) {
    const TableEntry& e = vmdef().table[op];
    if (!e.handler) continue;
    TranslationResult r = translateHandler(vmdef(), *e.handler, uint8_t(op));
    if (!r.ir) {
      uncompilable++;
      continue;
    }
    translatedCount++;
    auto problems = checkSsa(*r.ir);
    for (auto& p : problems) MESSAGE("op ", op, ": ", p);
    CHECK(problems.empty());
  }
  CHECK(translatedCount > 90);
  CHECK(uncompilable == 1);  // the identity-compare opcode

  for (auto& [id, def] : vmdef().primitiveHandlers) {
    TranslationResult r = translatePrimitive(vmdef(), *def);
    REQUIRE(r.ir.has_value());
    CHECK(checkSsa(*r.ir).empty());
  }
}

TEST_CASE("oracle: translated IR behaves like the handler under the compiled view") {
  std::mt19937_64 rng(42);
  int compared = 0;
  for (int op = 0; op <= 0xFF; op++) {
    const TableEntry& e = vmdef().table[op];
    if (!e.handler) continue;
    TranslationResult r = translateHandler(vmdef(), *e.handler, uint8_t(op));
    if (!r.ir) continue;
    for (int trial = 0; trial < 12; trial++) {
      MockState st = randomMockState(rng);
      st.opcode = uint8_t(op);
      EvalResult ast = handlerEval(vmdef(), *e.handler, uint8_t(op), st, IgnoreView::Compiled);
      EvalResult ire = irEval(*r.ir, st);
      std::string why;
      bool ok = resultsEquivalent(ast, ire, &why);
      if (!ok) MESSAGE("op ", op, " (", e.handlerName, "): ", why);
      CHECK(ok);
      compared++;
    }
  }
  for (auto& [id, def] : vmdef().primitiveHandlers) {
    TranslationResult r = translatePrimitive(vmdef(), *def);
    REQUIRE(r.ir.has_value());
    for (int trial = 0; trial < 40; trial++) {
      MockState st = randomMockState(rng, def.get());
      EvalResult ast = handlerEval(vmdef(), *def, 0, st, IgnoreView::Compiled);
      EvalResult ire = irEval(*r.ir, st);
      std::string why;
      bool ok = resultsEquivalent(ast, ire, &why);
      if (!ok) MESSAGE(def->name, ": ", why);
      CHECK(ok);
      compared++;
    }
  }
  CHECK(compared >= 1000);
}
