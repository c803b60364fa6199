#pragma once

#include <array>
#include <cstdint>

#include "druidlet/handler_lang.hpp"

namespace druidlet {

// Result of evaluating one handler to its terminator.
struct HandlerOutcome {
  enum class Kind {
    FetchNext,     // advance to the next bytecode
    Jump,          // a = offset relative to the pc after this instruction
    SendSpecial,   // a = special selector index, b = arg count
    SendLiteral,   // a = literal index holding the selector, b = arg count
    MethodReturn,  // value = returned value
    BooleanCheat,  // a = condition; consume a following conditional jump
    PrimResult,    // a = pop count, value = pushed result
    PrimFail,
    Deopt,         // compiled view of a forced-interpretation point
    HelperReturn,  // internal to helper calls
  };
  Kind kind = Kind::FetchNext;
  int64_t a = 0;
  int64_t b = 0;
  int64_t value = 0;
};

// Evaluates handler definitions against a context supplying VM state. This is
// the single executable semantics of the handler language: the interpreter
// instantiates it with the live frame, tests instantiate it with mock state.
//
// Ctx requirements:
//   int64_t stackTop(); int64_t stackValue(int64_t);
//   void push(int64_t); void pop(int64_t);
//   int64_t operandByte(int);        // instruction operand bytes
//   int64_t currentBytecode(); int64_t bytecodePC(); int64_t primFailCode();
//   int64_t methodObj();
//   int64_t tempAt(int64_t); void tempAtPut(int64_t, int64_t);
//   int64_t receiver();
//   int64_t nilObject(); int64_t trueObject(); int64_t falseObject();
//   int64_t fetchPointer(int64_t, int64_t);
//   void storePointer(int64_t, int64_t, int64_t);
//   int64_t numSlotsOf(int64_t); int64_t classIndexOf(int64_t);
//   int64_t newArrayOf(int64_t);
//   void mustBeBoolean(int64_t);     // must not return normally
// Which guided blocks execute: the interpreter runs druidIgnore bodies and
// skips interpreterIgnore bodies; the compiled view is the reverse and is
// what translated code implements.
enum class IgnoreView { Interpreter, Compiled };

template <class Ctx>
class HandlerEvaluator {
 public:
  HandlerEvaluator(const VMDefinition& vmdef, Ctx& ctx,
                   IgnoreView view = IgnoreView::Interpreter)
      : vmdef_(vmdef), ctx_(ctx), view_(view) {}

  HandlerOutcome run(const HandlerDef& def) {
    Locals locals{};
    fetchCursor_ = 0;
    HandlerOutcome out;
    if (!execBlock(def.body, locals, out))
      throw VmError(ErrorKind::VmBug, "handler fell off the end: " + def.name);
    return out;
  }

 private:
  using Locals = std::array<int64_t, 16>;

  const VMDefinition& vmdef_;
  Ctx& ctx_;
  IgnoreView view_ = IgnoreView::Interpreter;
  int fetchCursor_ = 0;

  static int64_t wrapAdd(int64_t a, int64_t b) {
    return int64_t(uint64_t(a) + uint64_t(b));
  }
  static int64_t wrapSub(int64_t a, int64_t b) {
    return int64_t(uint64_t(a) - uint64_t(b));
  }
  static int64_t wrapMul(int64_t a, int64_t b) {
    return int64_t(uint64_t(a) * uint64_t(b));
  }

  bool execBlock(const std::vector<StmtPtr>& body, Locals& locals, HandlerOutcome& out) {
    for (auto& s : body)
      if (execStmt(*s, locals, out)) return true;
    return false;
  }

  bool execStmt(const Stmt& s, Locals& locals, HandlerOutcome& out) {
    switch (s.kind) {
      case StmtKind::Let:
      case StmtKind::Assign:
        if (s.expr->kind == ExprKind::Checked) {
          int64_t result;
          if (evalChecked(*s.expr, locals, result, out)) return true;
          locals[s.varSlot] = result;
        } else {
          locals[s.varSlot] = eval(*s.expr, locals);
        }
        return false;
      case StmtKind::If:
        if (evalCond(*s.expr, locals)) return execBlock(s.body, locals, out);
        return execBlock(s.elseBody, locals, out);
      case StmtKind::While:
        while (evalCond(*s.expr, locals))
          if (execBlock(s.body, locals, out)) return true;
        return false;
      case StmtKind::CountedLoop: {
        int64_t from = eval(*s.expr, locals);
        int64_t to = eval(*s.expr2, locals);
        for (int64_t i = from; i <= to; i++) {
          locals[s.varSlot] = i;
          if (execBlock(s.body, locals, out)) return true;
        }
        return false;
      }
      case StmtKind::ExprStmt:
        return evalStmtExpr(*s.expr, locals, out);
      case StmtKind::Return:
        out.kind = HandlerOutcome::Kind::HelperReturn;
        out.value = s.expr ? eval(*s.expr, locals) : 0;
        return true;
      case StmtKind::DruidIgnore:
        // Executed by the interpreter, invisible to the meta-compiler.
        if (view_ == IgnoreView::Interpreter) return execBlock(s.body, locals, out);
        return false;
      case StmtKind::InterpreterIgnore:
        // Skipped by the interpreter, meta-interpreted by the compiler.
        if (view_ == IgnoreView::Compiled) return execBlock(s.body, locals, out);
        return false;
    }
    return false;
  }

  // Terminator intrinsics appear only as statement roots (validated), so
  // expression evaluation itself never terminates the handler.
  bool evalStmtExpr(const Expr& e, Locals& locals, HandlerOutcome& out) {
    if (e.kind != ExprKind::Call) {
      eval(e, locals);
      return false;
    }
    switch (e.intrinsic) {
      case Intrinsic::FetchNextBytecode:
        out.kind = HandlerOutcome::Kind::FetchNext;
        return true;
      case Intrinsic::JumpBy:
        out.kind = HandlerOutcome::Kind::Jump;
        out.a = eval(*e.args[0], locals);
        return true;
      case Intrinsic::SendSpecial:
        out.kind = HandlerOutcome::Kind::SendSpecial;
        out.a = eval(*e.args[0], locals);
        out.b = eval(*e.args[1], locals);
        return true;
      case Intrinsic::SendLiteral:
        out.kind = HandlerOutcome::Kind::SendLiteral;
        out.a = eval(*e.args[0], locals);
        out.b = eval(*e.args[1], locals);
        return true;
      case Intrinsic::CommonReturn:
        out.kind = HandlerOutcome::Kind::MethodReturn;
        out.value = eval(*e.args[0], locals);
        return true;
      case Intrinsic::BooleanCheat:
        out.kind = HandlerOutcome::Kind::BooleanCheat;
        out.a = evalCond(*e.args[0], locals) ? 1 : 0;
        return true;
      case Intrinsic::PrimitiveFail:
        out.kind = HandlerOutcome::Kind::PrimFail;
        return true;
      case Intrinsic::PopThenPush:
        out.kind = HandlerOutcome::Kind::PrimResult;
        out.a = eval(*e.args[0], locals);
        out.value = eval(*e.args[1], locals);
        return true;
      case Intrinsic::ForceInterpretation:
        if (view_ == IgnoreView::Compiled) {
          out.kind = HandlerOutcome::Kind::Deopt;
          return true;
        }
        return false;
      default:
        eval(e, locals);
        return false;
    }
  }

  bool evalChecked(const Expr& e, Locals& locals, int64_t& result, HandlerOutcome& out) {
    int64_t lhs = eval(*e.args[0], locals);
    int64_t rhs = eval(*e.args[1], locals);
    int64_t pa = lhs >> 1, pb = rhs >> 1;
    int64_t r = 0;
    bool overflow = false;
    switch (e.checkedOp) {
      case CheckedKind::Add: overflow = __builtin_add_overflow(pa, pb, &r); break;
      case CheckedKind::Sub: overflow = __builtin_sub_overflow(pa, pb, &r); break;
      case CheckedKind::Mul: overflow = __builtin_mul_overflow(pa, pb, &r); break;
    }
    overflow = overflow || r < kSmallIntMin || r > kSmallIntMax;
    if (overflow) {
      if (!execBlock(e.onOverflow, locals, out))
        throw VmError(ErrorKind::VmBug, "overflow block fell through");
      return true;
    }
    result = int64_t(uint64_t(r) << 1 | 1);
    return false;
  }

  bool evalCond(const Expr& e, Locals& locals) {
    if (isNotCall(e)) return !evalCond(*e.args[0], locals);
    if (e.kind != ExprKind::Call)
      throw VmError(ErrorKind::VmBug, "malformed condition");
    switch (e.intrinsic) {
      case Intrinsic::IsIntegerObject:
        return (eval(*e.args[0], locals) & 1) != 0;
      case Intrinsic::CmpEq:
        return eval(*e.args[0], locals) == eval(*e.args[1], locals);
      case Intrinsic::CmpNe:
        return eval(*e.args[0], locals) != eval(*e.args[1], locals);
      case Intrinsic::CmpLt:
        return eval(*e.args[0], locals) < eval(*e.args[1], locals);
      case Intrinsic::CmpLe:
        return eval(*e.args[0], locals) <= eval(*e.args[1], locals);
      case Intrinsic::CmpGt:
        return eval(*e.args[0], locals) > eval(*e.args[1], locals);
      case Intrinsic::CmpGe:
        return eval(*e.args[0], locals) >= eval(*e.args[1], locals);
      default:
        throw VmError(ErrorKind::VmBug, "malformed condition");
    }
  }

  int64_t eval(const Expr& e, Locals& locals) {
    switch (e.kind) {
      case ExprKind::IntConst:
        return e.intValue;
      case ExprKind::Var:
        return locals[e.varSlot];
      case ExprKind::Stageable:
        return eval(*e.inner, locals);
      case ExprKind::HelperCall:
        return callHelper(e, locals);
      case ExprKind::Checked:
        throw VmError(ErrorKind::VmBug, "checked arithmetic outside let");
      case ExprKind::Call:
        break;
    }
    switch (e.intrinsic) {
      case Intrinsic::Add:
        return wrapAdd(eval(*e.args[0], locals), eval(*e.args[1], locals));
      case Intrinsic::Sub:
        return wrapSub(eval(*e.args[0], locals), eval(*e.args[1], locals));
      case Intrinsic::Mul:
        return wrapMul(eval(*e.args[0], locals), eval(*e.args[1], locals));
      case Intrinsic::BitAnd:
        return eval(*e.args[0], locals) & eval(*e.args[1], locals);
      case Intrinsic::ShiftLeft:
        return int64_t(uint64_t(eval(*e.args[0], locals))
                       << (eval(*e.args[1], locals) & 63));
      case Intrinsic::ShiftRight:
        return eval(*e.args[0], locals) >> (eval(*e.args[1], locals) & 63);
      case Intrinsic::StackTop:
        return ctx_.stackTop();
      case Intrinsic::StackValue:
        return ctx_.stackValue(eval(*e.args[0], locals));
      case Intrinsic::Push:
        ctx_.push(eval(*e.args[0], locals));
        return 0;
      case Intrinsic::Pop:
        ctx_.pop(eval(*e.args[0], locals));
        return 0;
      case Intrinsic::FetchByte:
        return ctx_.operandByte(fetchCursor_++);
      case Intrinsic::IsIntegerObject:
        throw VmError(ErrorKind::VmBug, "comparison outside condition");
      case Intrinsic::FetchPointer:
        return ctx_.fetchPointer(eval(*e.args[0], locals), eval(*e.args[1], locals));
      case Intrinsic::StorePointer: {
        int64_t i = eval(*e.args[0], locals);
        int64_t obj = eval(*e.args[1], locals);
        int64_t v = eval(*e.args[2], locals);
        ctx_.storePointer(i, obj, v);
        return 0;
      }
      case Intrinsic::NumSlots:
        return ctx_.numSlotsOf(eval(*e.args[0], locals));
      case Intrinsic::ClassIndex:
        return ctx_.classIndexOf(eval(*e.args[0], locals));
      case Intrinsic::NewArrayOf:
        return ctx_.newArrayOf(eval(*e.args[0], locals));
      case Intrinsic::TempAt:
        return ctx_.tempAt(eval(*e.args[0], locals));
      case Intrinsic::TempAtPut: {
        int64_t i = eval(*e.args[0], locals);
        int64_t v = eval(*e.args[1], locals);
        ctx_.tempAtPut(i, v);
        return 0;
      }
      case Intrinsic::Receiver:
        return ctx_.receiver();
      case Intrinsic::NilObject:
        return ctx_.nilObject();
      case Intrinsic::TrueObject:
        return ctx_.trueObject();
      case Intrinsic::FalseObject:
        return ctx_.falseObject();
      case Intrinsic::MustBeBoolean:
        ctx_.mustBeBoolean(eval(*e.args[0], locals));
        throw VmError(ErrorKind::VmBug, "mustBeBoolean returned");
      case Intrinsic::ForceInterpretation:
        return 0;  // interpreter-side no-op; the compiled tier deoptimizes here
      case Intrinsic::CurrentBytecode:
        return ctx_.currentBytecode();
      case Intrinsic::BytecodePC:
        return ctx_.bytecodePC();
      case Intrinsic::PrimFailCode:
        return ctx_.primFailCode();
      case Intrinsic::Byte1:
        return ctx_.operandByte(0);
      case Intrinsic::Byte2:
        return ctx_.operandByte(1);
      case Intrinsic::MethodObj:
        return ctx_.methodObj();
      default:
        throw VmError(ErrorKind::VmBug, "terminator intrinsic in expression position");
    }
  }

  int64_t callHelper(const Expr& e, Locals& locals) {
    auto it = vmdef_.helpers.find(e.name);
    if (it == vmdef_.helpers.end())
      throw VmError(ErrorKind::VmBug, "unresolved helper " + e.name);
    const HelperDef& helper = *it->second;
    Locals helperLocals{};
    for (size_t i = 0; i < e.args.size(); i++)
      helperLocals[i] = eval(*e.args[i], locals);
    HandlerOutcome out;
    if (!execBlock(helper.body, helperLocals, out) ||
        out.kind != HandlerOutcome::Kind::HelperReturn)
      throw VmError(ErrorKind::VmBug, "helper fell off the end: " + e.name);
    return out.value;
  }
};

}  // namespace druidlet
