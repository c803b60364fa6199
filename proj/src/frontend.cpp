#include "druidlet/frontend.hpp"

#include <map>

#include "druidlet/object_model.hpp"
#include "druidlet/opcodes.hpp"

namespace druidlet {

namespace {

constexpr int kMaxInlineDepth = 16;

struct TranslationAbort {};

class MetaTranslator {
 public:
  MetaTranslator(const VMDefinition& vmdef, const HandlerDef& def, uint8_t opcode)
      : vmdef_(vmdef), def_(def) {
    ir_.name = def.name;
    ir_.kind = def.kind;
    ir_.annotations = def.annotations;
    ir_.opcode = opcode;
    ir_.operandCount = operandByteCount(opcode);
    isPrimitive_ = def.kind == HandlerKind::Primitive;
    if (isPrimitive_) {
      ir_.numArgs = def.annotations.numberOfArguments.value_or(0);
      ir_.operandCount = 0;
    }
    current_ = ir_.addBlock();
    ir_.entry = current_;
  }

  TranslationResult run() {
    TranslationResult result;
    try {
      env_.assign(size_t(def_.localCount), -1);
      Env env{&env_};
      translateBlockList(def_.body, env);
      if (!terminated_)
        fail("handler body ended without a terminator");
    } catch (const TranslationAbort&) {
      if (diags_.empty()) diags_.push_back({def_.name, "translation aborted"});
    }
    result.diagnostics = diags_;
    if (diags_.empty()) {
      result.ir = std::move(ir_);
      if (isPrimitive_) result.installClassGuard = def_.annotations.customisedReceiverFor;
    }
    return result;
  }

 private:
  struct Env {
    std::vector<int>* slots;
  };

  const VMDefinition& vmdef_;
  const HandlerDef& def_;
  Ir ir_;
  int current_ = 0;
  bool terminated_ = false;
  bool isPrimitive_ = false;
  std::vector<int> env_;
  std::vector<Diagnostic> diags_;
  int fetchCursor_ = 0;
  int inlineDepth_ = 0;
  int receiverValue_ = -1;
  std::vector<int> argValues_;
  std::map<std::pair<int, int64_t>, int> constCache_;      // (block, value)
  std::map<std::pair<int, int>, int> stageCache_;          // (block, kind)

  [[noreturn]] void fail(const std::string& msg) {
    diags_.push_back({def_.name, msg});
    throw TranslationAbort{};
  }

  int emit(IrInstr instr) { return ir_.append(current_, std::move(instr)); }

  void setTerminator(IrInstr instr, std::vector<int> succs = {}) {
    ir_.append(current_, std::move(instr));
    ir_.blocks[size_t(current_)].succs = succs;
    for (int s : succs) ir_.blocks[size_t(s)].preds.push_back(current_);
    terminated_ = true;
  }

  int constant(int64_t v) {
    auto key = std::make_pair(current_, v);
    auto it = constCache_.find(key);
    if (it != constCache_.end()) return it->second;
    IrInstr i;
    i.op = IrOp::Constant;
    i.imm = v;
    int id = emit(std::move(i));
    constCache_[key] = id;
    return id;
  }

  int stageSource(StageKind k) {
    auto key = std::make_pair(current_, int(k));
    auto it = stageCache_.find(key);
    if (it != stageCache_.end()) return it->second;
    IrInstr i;
    i.op = IrOp::StageSource;
    i.stage = k;
    int id = emit(std::move(i));
    stageCache_[key] = id;
    return id;
  }

  int receiverValue() {
    if (isPrimitive_) {
      if (receiverValue_ < 0) {
        IrInstr i;
        i.op = IrOp::LoadReceiver;
        receiverValue_ = emit(std::move(i));
      }
      return receiverValue_;
    }
    IrInstr i;
    i.op = IrOp::LoadReceiver;
    return emit(std::move(i));
  }

  int argValue(int k) {
    if (int(argValues_.size()) <= k) argValues_.resize(size_t(k) + 1, -1);
    if (argValues_[size_t(k)] < 0) {
      IrInstr i;
      i.op = IrOp::LoadArg;
      i.imm = k;
      argValues_[size_t(k)] = emit(std::move(i));
    }
    return argValues_[size_t(k)];
  }

  bool isConstant(int id, int64_t& out) const {
    const IrInstr& i = ir_.instr(id);
    if (i.op != IrOp::Constant) return false;
    out = i.imm;
    return true;
  }

  // ---- statements ----

  void translateBlockList(const std::vector<StmtPtr>& stmts, Env& env) {
    for (auto& s : stmts) {
      if (terminated_) return;  // unreachable after a terminator or deopt
      translateStmt(*s, env);
    }
  }

  void translateStmt(const Stmt& s, Env& env) {
    switch (s.kind) {
      case StmtKind::Let:
      case StmtKind::Assign:
        if (s.expr->kind == ExprKind::Checked) {
          int v = translateChecked(*s.expr, env);
          if (terminated_) return;
          (*env.slots)[size_t(s.varSlot)] = v;
        } else {
          int v = translateExpr(*s.expr, env);
          if (terminated_) return;
          (*env.slots)[size_t(s.varSlot)] = v;
        }
        return;
      case StmtKind::If:
        translateIf(s, env);
        return;
      case StmtKind::While:
        translateWhile(s, env, /*counted=*/false);
        return;
      case StmtKind::CountedLoop:
        translateWhile(s, env, /*counted=*/true);
        return;
      case StmtKind::ExprStmt:
        translateStmtExpr(*s.expr, env);
        return;
      case StmtKind::Return: {
        // helper return, handled by the inliner
        int v = s.expr ? translateExpr(*s.expr, env) : constant(0);
        if (terminated_) return;
        helperReturns_.push_back({current_, v});
        terminated_ = true;
        return;
      }
      case StmtKind::DruidIgnore:
        return;  // absent from compiled code
      case StmtKind::InterpreterIgnore:
        translateBlockList(s.body, env);
        return;
    }
  }

  struct CondResult {
    bool isConst = false;
    bool constValue = false;
    int value = -1;
    bool negated = false;
  };

  CondResult translateCond(const Expr& e, Env& env) {
    if (isNotCall(e)) {
      CondResult inner = translateCond(*e.args[0], env);
      if (inner.isConst) inner.constValue = !inner.constValue;
      else inner.negated = !inner.negated;
      return inner;
    }
    CondResult r;
    if (e.kind != ExprKind::Call) fail("malformed condition");
    if (e.intrinsic == Intrinsic::IsIntegerObject) {
      int v = translateExpr(*e.args[0], env);
      if (terminated_) throw TranslationAbort{};
      if (isPrimitive_ && v == receiverValue_ && def_.annotations.customisedReceiverFor) {
        r.isConst = true;
        r.constValue = *def_.annotations.customisedReceiverFor == kClassSmallInteger;
        return r;
      }
      IrInstr i;
      i.op = IrOp::Compare;
      i.cond = IrCond::TestMaskNonZero;
      i.args = {v, constant(1)};
      r.value = emit(std::move(i));
      return r;
    }
    IrCond cond;
    switch (e.intrinsic) {
      case Intrinsic::CmpEq: cond = IrCond::Eq; break;
      case Intrinsic::CmpNe: cond = IrCond::Ne; break;
      case Intrinsic::CmpLt: cond = IrCond::Lt; break;
      case Intrinsic::CmpLe: cond = IrCond::Le; break;
      case Intrinsic::CmpGt: cond = IrCond::Gt; break;
      case Intrinsic::CmpGe: cond = IrCond::Ge; break;
      default: fail("unsupported condition intrinsic");
    }
    int a = translateExpr(*e.args[0], env);
    if (terminated_) throw TranslationAbort{};
    int b = translateExpr(*e.args[1], env);
    if (terminated_) throw TranslationAbort{};
    int64_t ca, cb;
    if (isConstant(a, ca) && isConstant(b, cb)) {
      // folds the meta-constant receiver-class guard comparisons
      bool v = false;
      switch (cond) {
        case IrCond::Eq: v = ca == cb; break;
        case IrCond::Ne: v = ca != cb; break;
        case IrCond::Lt: v = ca < cb; break;
        case IrCond::Le: v = ca <= cb; break;
        case IrCond::Gt: v = ca > cb; break;
        case IrCond::Ge: v = ca >= cb; break;
        default: break;
      }
      r.isConst = true;
      r.constValue = v;
      return r;
    }
    IrInstr i;
    i.op = IrOp::Compare;
    i.cond = cond;
    i.args = {a, b};
    r.value = emit(std::move(i));
    return r;
  }

  void translateIf(const Stmt& s, Env& env) {
    CondResult cond = translateCond(*s.expr, env);
    if (terminated_) return;
    if (cond.isConst) {
      translateBlockList(cond.constValue ? s.body : s.elseBody, env);
      return;
    }
    int thenB = ir_.addBlock();
    int elseB = ir_.addBlock();
    IrInstr br;
    br.op = IrOp::Branch;
    br.args = {cond.value};
    if (cond.negated)
      setTerminator(std::move(br), {elseB, thenB});
    else
      setTerminator(std::move(br), {thenB, elseB});
    terminated_ = false;

    std::vector<int> savedEnv = *env.slots;

    current_ = thenB;
    translateBlockList(s.body, env);
    bool thenTerm = terminated_;
    int thenEnd = current_;
    std::vector<int> thenEnv = *env.slots;

    terminated_ = false;
    current_ = elseB;
    *env.slots = savedEnv;
    translateBlockList(s.elseBody, env);
    bool elseTerm = terminated_;
    int elseEnd = current_;
    std::vector<int> elseEnv = *env.slots;

    if (thenTerm && elseTerm) {
      terminated_ = true;
      return;
    }
    if (thenTerm) {
      current_ = elseEnd;
      *env.slots = elseEnv;
      terminated_ = false;
      return;
    }
    if (elseTerm) {
      current_ = thenEnd;
      *env.slots = thenEnv;
      terminated_ = false;
      return;
    }
    // both arms continue; merge with phis where the bindings diverge
    int mergeB = ir_.addBlock();
    current_ = thenEnd;
    terminated_ = false;
    setTerminator(IrInstr{.op = IrOp::Jump}, {mergeB});
    current_ = elseEnd;
    terminated_ = false;
    setTerminator(IrInstr{.op = IrOp::Jump}, {mergeB});
    current_ = mergeB;
    terminated_ = false;
    for (size_t i = 0; i < env.slots->size(); i++) {
      if (thenEnv[i] != elseEnv[i]) {
        if (thenEnv[i] < 0 || elseEnv[i] < 0) {
          (*env.slots)[i] = -1;
          continue;
        }
        IrInstr phi;
        phi.op = IrOp::Phi;
        phi.args = {thenEnv[i], elseEnv[i]};
        (*env.slots)[i] = emit(std::move(phi));
      } else {
        (*env.slots)[i] = thenEnv[i];
      }
    }
  }

  void collectAssignedSlots(const std::vector<StmtPtr>& stmts, std::vector<int>& out) {
    for (auto& s : stmts) {
      if (s->kind == StmtKind::Assign || s->kind == StmtKind::Let ||
          s->kind == StmtKind::CountedLoop)
        out.push_back(s->varSlot);
      collectAssignedSlots(s->body, out);
      collectAssignedSlots(s->elseBody, out);
    }
  }

  void translateWhile(const Stmt& s, Env& env, bool counted) {
    // counted loops desugar to: var := from; while (var <= to) { body; var := var + 1 }
    int limitValue = -1;
    if (counted) {
      int fromV = translateExpr(*s.expr, env);
      if (terminated_) return;
      limitValue = translateExpr(*s.expr2, env);
      if (terminated_) return;
      (*env.slots)[size_t(s.varSlot)] = fromV;
    }
    std::vector<int> assigned;
    collectAssignedSlots(s.body, assigned);
    if (counted) assigned.push_back(s.varSlot);

    int headerB = ir_.addBlock();
    setTerminator(IrInstr{.op = IrOp::Jump}, {headerB});
    terminated_ = false;
    current_ = headerB;

    // loop phis for every binding the body reassigns
    std::vector<std::pair<int, int>> phiSlots;  // (slot, phi id)
    for (int slot : assigned) {
      int incoming = (*env.slots)[size_t(slot)];
      if (incoming < 0) continue;  // defined only inside the body
      bool seen = false;
      for (auto& p : phiSlots) seen |= p.first == slot;
      if (seen) continue;
      IrInstr phi;
      phi.op = IrOp::Phi;
      phi.args = {incoming};  // back edge patched below
      int id = emit(std::move(phi));
      phiSlots.emplace_back(slot, id);
      (*env.slots)[size_t(slot)] = id;
    }

    CondResult cond;
    if (counted) {
      IrInstr cmp;
      cmp.op = IrOp::Compare;
      cmp.cond = IrCond::Le;
      cmp.args = {(*env.slots)[size_t(s.varSlot)], limitValue};
      cond.value = emit(std::move(cmp));
    } else {
      cond = translateCond(*s.expr, env);
      if (terminated_) return;
      if (cond.isConst) fail("loop condition folds to a constant at meta time");
    }
    int bodyB = ir_.addBlock();
    int exitB = ir_.addBlock();
    IrInstr br;
    br.op = IrOp::Branch;
    br.args = {cond.value};
    if (cond.negated)
      setTerminator(std::move(br), {exitB, bodyB});
    else
      setTerminator(std::move(br), {bodyB, exitB});
    terminated_ = false;
    current_ = bodyB;

    std::vector<int> headerEnv = *env.slots;
    translateBlockList(s.body, env);
    if (terminated_) fail("loop body must not terminate the handler");
    if (counted) {
      IrInstr inc;
      inc.op = IrOp::Add;
      inc.args = {(*env.slots)[size_t(s.varSlot)], constant(1)};
      (*env.slots)[size_t(s.varSlot)] = emit(std::move(inc));
    }
    setTerminator(IrInstr{.op = IrOp::Jump}, {headerB});
    for (auto& [slot, phiId] : phiSlots)
      ir_.instr(phiId).args.push_back((*env.slots)[size_t(slot)]);

    terminated_ = false;
    current_ = exitB;
    *env.slots = headerEnv;
  }

  int translateChecked(const Expr& e, Env& env) {
    int lhs = translateExpr(*e.args[0], env);
    if (terminated_) return -1;
    int rhs = translateExpr(*e.args[1], env);
    if (terminated_) return -1;
    int okB = ir_.addBlock();
    int ovfB = ir_.addBlock();
    IrInstr chk;
    chk.op = e.checkedOp == CheckedKind::Add   ? IrOp::CheckedAdd
             : e.checkedOp == CheckedKind::Sub ? IrOp::CheckedSub
                                               : IrOp::CheckedMul;
    chk.args = {lhs, rhs};
    int value = int(ir_.instrs.size());
    setTerminator(std::move(chk), {okB, ovfB});

    terminated_ = false;
    current_ = ovfB;
    std::vector<int> savedEnv = *env.slots;
    translateBlockList(e.onOverflow, env);
    if (!terminated_) fail("overflow block must terminate its path");
    *env.slots = savedEnv;

    terminated_ = false;
    current_ = okB;
    return value;
  }

  void translateStmtExpr(const Expr& e, Env& env) {
    if (e.kind != ExprKind::Call) {
      translateExpr(e, env);
      return;
    }
    switch (e.intrinsic) {
      case Intrinsic::FetchNextBytecode:
        setTerminator(IrInstr{.op = IrOp::EndHandler});
        return;
      case Intrinsic::JumpBy: {
        int off = translateExpr(*e.args[0], env);
        if (terminated_) return;
        IrInstr pcAfter;
        pcAfter.op = IrOp::Add;
        pcAfter.args = {stageSource(StageKind::BytecodePc), constant(1 + ir_.operandCount)};
        int pcAfterV = emit(std::move(pcAfter));
        IrInstr target;
        target.op = IrOp::Add;
        target.args = {pcAfterV, off};
        int targetV = emit(std::move(target));
        IrInstr j;
        j.op = IrOp::JumpToBytecode;
        j.args = {targetV};
        setTerminator(std::move(j));
        return;
      }
      case Intrinsic::SendSpecial: {
        int64_t idx, argc;
        int idxV = translateExpr(*e.args[0], env);
        int argcV = translateExpr(*e.args[1], env);
        if (!isConstant(idxV, idx) || !isConstant(argcV, argc))
          fail("special send needs meta-constant selector index and arg count");
        if (idx < 0 || idx >= int64_t(vmdef_.specialSelectors.size()))
          fail("special selector index out of range");
        if (argc < 0 || argc > 15) fail("send arg count out of range at meta time");
        IrInstr send;
        send.op = IrOp::Send;
        send.imm = argc;
        send.args = {constant(vmdef_.specialSelectors[size_t(idx)])};
        emit(std::move(send));
        ir_.annotations.hasSend = true;
        setTerminator(IrInstr{.op = IrOp::EndHandler});
        return;
      }
      case Intrinsic::SendLiteral: {
        int litIdxV = translateExpr(*e.args[0], env);
        if (terminated_) return;
        int argcV = translateExpr(*e.args[1], env);
        if (terminated_) return;
        int64_t argc;
        if (!isConstant(argcV, argc) &&
            ir_.instr(argcV).op != IrOp::StageSource)
          fail("literal send needs a staged arg count");
        if (isConstant(argcV, argc) && (argc < 0 || argc > 15))
          fail("send arg count out of range at meta time");
        IrInstr slot;
        slot.op = IrOp::Add;
        slot.args = {litIdxV, constant(kLiteralStart)};
        int slotV = emit(std::move(slot));
        IrInstr load;
        load.op = IrOp::LoadSlot;
        load.args = {stageSource(StageKind::Method), slotV};
        int loadV = emit(std::move(load));
        IrInstr hint;
        hint.op = IrOp::StageHint;
        hint.args = {loadV};
        int hintV = emit(std::move(hint));
        IrInstr untag;
        untag.op = IrOp::ShiftRight;
        untag.args = {hintV, constant(1)};
        int selV = emit(std::move(untag));
        IrInstr send;
        send.op = IrOp::Send;
        send.imm = -1;  // arg count staged
        send.args = {selV, argcV};
        emit(std::move(send));
        ir_.annotations.hasSend = true;
        setTerminator(IrInstr{.op = IrOp::EndHandler});
        return;
      }
      case Intrinsic::CommonReturn: {
        int v = translateExpr(*e.args[0], env);
        if (terminated_) return;
        IrInstr ret;
        ret.op = IrOp::Return;
        ret.args = {v};
        setTerminator(std::move(ret));
        return;
      }
      case Intrinsic::PopThenPush: {
        int64_t n;
        int nV = translateExpr(*e.args[0], env);
        if (!isConstant(nV, n) || n != ir_.numArgs + 1)
          fail("primitive result must pop receiver and arguments exactly");
        int v = translateExpr(*e.args[1], env);
        if (terminated_) return;
        IrInstr ret;
        ret.op = IrOp::Return;
        ret.args = {v};
        setTerminator(std::move(ret));
        return;
      }
      case Intrinsic::PrimitiveFail:
        setTerminator(IrInstr{.op = IrOp::PrimFail});
        return;
      case Intrinsic::ForceInterpretation:
        setTerminator(IrInstr{.op = IrOp::DeoptPoint});
        return;
      case Intrinsic::BooleanCheat:
        fail("no translation rule for booleanCheat");
      default:
        translateExpr(e, env);
        return;
    }
  }

  // ---- expressions ----

  std::vector<std::pair<int, int>> helperReturns_;  // (block, value) of the innermost helper

  int translateExpr(const Expr& e, Env& env) {
    switch (e.kind) {
      case ExprKind::IntConst:
        return constant(e.intValue);
      case ExprKind::Var: {
        int v = (*env.slots)[size_t(e.varSlot)];
        if (v < 0) fail("variable '" + e.name + "' may be undefined here");
        return v;
      }
      case ExprKind::Checked:
        fail("checked arithmetic must be bound by a let");
      case ExprKind::Stageable: {
        int v = translateExpr(*e.inner, env);
        if (terminated_) return -1;
        const IrInstr& ins = ir_.instr(v);
        bool ok = ins.op == IrOp::StageSource ||
                  (ins.op == IrOp::LoadSlot &&
                   ir_.instr(ins.args[0]).op == IrOp::StageSource &&
                   ir_.instr(ins.args[0]).stage == StageKind::Method);
        if (!ok) fail("stageable accepts only method literal loads and special-object reads");
        IrInstr hint;
        hint.op = IrOp::StageHint;
        hint.args = {v};
        return emit(std::move(hint));
      }
      case ExprKind::HelperCall:
        return inlineHelper(e, env);
      case ExprKind::Call:
        break;
    }
    auto bin = [&](IrOp op) {
      int a = translateExpr(*e.args[0], env);
      if (terminated_) return -1;
      int b = translateExpr(*e.args[1], env);
      if (terminated_) return -1;
      IrInstr i;
      i.op = op;
      i.args = {a, b};
      return emit(std::move(i));
    };
    switch (e.intrinsic) {
      case Intrinsic::Add: return bin(IrOp::Add);
      case Intrinsic::Sub: return bin(IrOp::Sub);
      case Intrinsic::Mul: return bin(IrOp::Mul);
      case Intrinsic::BitAnd: return bin(IrOp::BitAnd);
      case Intrinsic::ShiftLeft: return bin(IrOp::ShiftLeft);
      case Intrinsic::ShiftRight: return bin(IrOp::ShiftRight);
      case Intrinsic::StackTop:
      case Intrinsic::StackValue: {
        int64_t depth = 0;
        if (e.intrinsic == Intrinsic::StackValue) {
          int dV = translateExpr(*e.args[0], env);
          if (!isConstant(dV, depth)) fail("stack depth must be meta-constant");
        }
        if (isPrimitive_) {
          if (depth == ir_.numArgs) return receiverValue();
          if (depth < ir_.numArgs) return argValue(int(ir_.numArgs - 1 - depth));
          fail("stack access beyond the primitive calling convention");
        }
        IrInstr i;
        i.op = IrOp::StackRead;
        i.imm = depth;
        return emit(std::move(i));
      }
      case Intrinsic::Push: {
        int v = translateExpr(*e.args[0], env);
        if (terminated_) return -1;
        IrInstr i;
        i.op = IrOp::StackPush;
        i.args = {v};
        return emit(std::move(i));
      }
      case Intrinsic::Pop: {
        int64_t n;
        int nV = translateExpr(*e.args[0], env);
        if (!isConstant(nV, n)) fail("pop count must be meta-constant");
        IrInstr i;
        i.op = IrOp::StackPop;
        i.imm = n;
        return emit(std::move(i));
      }
      case Intrinsic::FetchByte: {
        if (fetchCursor_ >= ir_.operandCount)
          fail("fetchByte beyond this entry's operand bytes");
        return stageSource(fetchCursor_++ == 0 ? StageKind::Byte1 : StageKind::Byte2);
      }
      case Intrinsic::FetchPointer: {
        int idx = translateExpr(*e.args[0], env);
        if (terminated_) return -1;
        int obj = translateExpr(*e.args[1], env);
        if (terminated_) return -1;
        IrInstr i;
        i.op = IrOp::LoadSlot;
        i.args = {obj, idx};
        return emit(std::move(i));
      }
      case Intrinsic::StorePointer: {
        int idx = translateExpr(*e.args[0], env);
        if (terminated_) return -1;
        int obj = translateExpr(*e.args[1], env);
        if (terminated_) return -1;
        int v = translateExpr(*e.args[2], env);
        if (terminated_) return -1;
        IrInstr i;
        i.op = IrOp::StoreSlot;
        i.args = {obj, idx, v};
        return emit(std::move(i));
      }
      case Intrinsic::NumSlots: {
        int obj = translateExpr(*e.args[0], env);
        if (terminated_) return -1;
        IrInstr i;
        i.op = IrOp::LoadNumSlots;
        i.args = {obj};
        return emit(std::move(i));
      }
      case Intrinsic::ClassIndex: {
        int obj = translateExpr(*e.args[0], env);
        if (terminated_) return -1;
        if (isPrimitive_ && obj == receiverValue_ && def_.annotations.customisedReceiverFor)
          return constant(*def_.annotations.customisedReceiverFor);
        IrInstr i;
        i.op = IrOp::LoadClassId;
        i.args = {obj};
        return emit(std::move(i));
      }
      case Intrinsic::NewArrayOf: {
        int n = translateExpr(*e.args[0], env);
        if (terminated_) return -1;
        IrInstr i;
        i.op = IrOp::RuntimeCall;
        i.hook = RuntimeHook::AllocArray;
        i.args = {n};
        return emit(std::move(i));
      }
      case Intrinsic::TempAt: {
        int idx = translateExpr(*e.args[0], env);
        if (terminated_) return -1;
        IrInstr i;
        i.op = IrOp::LoadTemp;
        i.args = {idx};
        return emit(std::move(i));
      }
      case Intrinsic::TempAtPut: {
        int idx = translateExpr(*e.args[0], env);
        if (terminated_) return -1;
        int v = translateExpr(*e.args[1], env);
        if (terminated_) return -1;
        IrInstr i;
        i.op = IrOp::StoreTemp;
        i.args = {idx, v};
        return emit(std::move(i));
      }
      case Intrinsic::Receiver:
        return receiverValue();
      case Intrinsic::NilObject: return stageSource(StageKind::NilObject);
      case Intrinsic::TrueObject: return stageSource(StageKind::TrueObject);
      case Intrinsic::FalseObject: return stageSource(StageKind::FalseObject);
      case Intrinsic::MustBeBoolean: {
        int v = translateExpr(*e.args[0], env);
        if (terminated_) return -1;
        IrInstr i;
        i.op = IrOp::RuntimeCall;
        i.hook = RuntimeHook::MustBeBoolean;
        i.args = {v};
        return emit(std::move(i));
      }
      case Intrinsic::CurrentBytecode:
        return constant(ir_.opcode);
      case Intrinsic::BytecodePC:
        return stageSource(StageKind::BytecodePc);
      case Intrinsic::PrimFailCode:
        return constant(0);
      case Intrinsic::Byte1:
        if (ir_.operandCount < 1) fail("byte1 read without an operand byte");
        return stageSource(StageKind::Byte1);
      case Intrinsic::Byte2:
        if (ir_.operandCount < 2) fail("byte2 read without a second operand byte");
        return stageSource(StageKind::Byte2);
      case Intrinsic::MethodObj:
        return stageSource(StageKind::Method);
      case Intrinsic::BooleanCheat:
        fail("no translation rule for booleanCheat");
      default:
        fail(std::string("intrinsic ") + intrinsicInfo(e.intrinsic).name +
             " is not valid in expression position");
    }
  }

  int inlineHelper(const Expr& e, Env& env) {
    auto it = vmdef_.helpers.find(e.name);
    if (it == vmdef_.helpers.end()) fail("unresolved helper " + e.name);
    const HelperDef& helper = *it->second;
    if (helper.annotations.druidExitPoint) {
      // compilation exit point: never compiled, leave through the runtime
      for (auto& a : e.args) {
        translateExpr(*a, env);  // argument effects precede the exit
        if (terminated_) return -1;
      }
      if (isPrimitive_)
        setTerminator(IrInstr{.op = IrOp::PrimFail});
      else
        setTerminator(IrInstr{.op = IrOp::DeoptPoint});
      return -1;
    }
    if (++inlineDepth_ > kMaxInlineDepth) fail("helper inlining depth exceeded");

    std::vector<int> helperSlots(size_t(helper.localCount), -1);
    for (size_t i = 0; i < e.args.size(); i++) {
      helperSlots[i] = translateExpr(*e.args[i], env);
      if (terminated_) {
        inlineDepth_--;
        return -1;
      }
    }
    std::vector<std::pair<int, int>> savedReturns = std::move(helperReturns_);
    helperReturns_.clear();
    Env helperEnv{&helperSlots};
    translateBlockList(helper.body, helperEnv);
    std::vector<std::pair<int, int>> returns = std::move(helperReturns_);
    helperReturns_ = std::move(savedReturns);
    inlineDepth_--;

    if (returns.empty()) {
      if (!terminated_) fail("helper " + helper.name + " ended without a return");
      return -1;  // all paths left through exit points
    }
    if (returns.size() == 1 && terminated_ && returns[0].first == current_) {
      terminated_ = false;
      return returns[0].second;
    }
    // multiple returns: join them
    int joinB = ir_.addBlock();
    for (auto& [block, value] : returns) {
      current_ = block;
      terminated_ = false;
      setTerminator(IrInstr{.op = IrOp::Jump}, {joinB});
    }
    current_ = joinB;
    terminated_ = false;
    IrInstr phi;
    phi.op = IrOp::Phi;
    for (auto& [block, value] : returns) phi.args.push_back(value);
    return emit(std::move(phi));
  }
};

}  // namespace

TranslationResult translateHandler(const VMDefinition& vmdef, const HandlerDef& def,
                                   uint8_t opcode) {
  MetaTranslator t(vmdef, def, opcode);
  return t.run();
}

TranslationResult translatePrimitive(const VMDefinition& vmdef, const HandlerDef& def) {
  if (!def.annotations.numberOfArguments) {
    TranslationResult r;
    r.diagnostics.push_back({def.name, "primitive without numberOfArguments is not compiled"});
    return r;
  }
  MetaTranslator t(vmdef, def, 0);
  return t.run();
}

}  // namespace druidlet
