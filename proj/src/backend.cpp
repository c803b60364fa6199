#include "druidlet/backend.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <set>
#include <sstream>

#include "druidlet/midend.hpp"

namespace druidlet {

// ---------------------------------------------------------------------------
// Staging analysis

namespace {

StageClass join(StageClass a, StageClass b) {
  if (a == StageClass::Runtime || b == StageClass::Runtime) return StageClass::Runtime;
  if (a == StageClass::JitConst || b == StageClass::JitConst) return StageClass::JitConst;
  return StageClass::Bottom;
}

}  // namespace

StagingResult stageAnalysis(const Ir& ir) {
  StagingResult result;
  auto& cls = result.classes;
  cls.assign(ir.instrs.size(), StageClass::Bottom);
  std::vector<int> idom = ir.dominators();

  auto transfer = [&](int id) {
    const IrInstr& i = ir.instr(id);
    switch (i.op) {
      case IrOp::Constant:
      case IrOp::StageSource:
        return StageClass::JitConst;
      case IrOp::StageHint:
        return StageClass::JitConst;  // the lifted load runs at JIT compile time
      case IrOp::Copy:
        return cls[size_t(i.args[0])];
      case IrOp::Add: case IrOp::Sub: case IrOp::Mul: case IrOp::BitAnd:
      case IrOp::ShiftLeft: case IrOp::ShiftRight: case IrOp::Compare: {
        StageClass s = StageClass::Bottom;
        for (int a : i.args) s = join(s, cls[size_t(a)]);
        return s;
      }
      case IrOp::Phi: {
        StageClass s = StageClass::Bottom;
        for (int a : i.args) s = join(s, cls[size_t(a)]);
        // a merge controlled by a run-time decision is run-time data
        int d = idom[size_t(i.block)];
        if (d >= 0 && d != i.block) {
          int term = ir.terminatorOf(d);
          if (term >= 0) {
            const IrInstr& t = ir.instr(term);
            if (irOpIsChecked(t.op)) s = StageClass::Runtime;
            if (t.op == IrOp::Branch && cls[size_t(t.args[0])] == StageClass::Runtime)
              s = StageClass::Runtime;
          }
        }
        return s;
      }
      case IrOp::CheckedAdd: case IrOp::CheckedSub: case IrOp::CheckedMul:
        return StageClass::Runtime;
      default:
        return StageClass::Runtime;  // loads, sends, runtime calls, frame access
    }
  };

  auto propagate = [&]() {
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t b = 0; b < ir.blocks.size(); b++) {
        if (ir.blocks[b].dead) continue;
        for (int id : ir.blocks[b].instrs) {
          if (ir.instr(id).dead) continue;
          StageClass next = transfer(id);
          if (next != cls[size_t(id)] && cls[size_t(id)] != StageClass::Runtime) {
            cls[size_t(id)] = join(cls[size_t(id)], next);
            changed = true;
          }
        }
      }
    }
  };
  propagate();

  // Loop variables staged under a run-time loop condition would need to vary
  // per run-time iteration: demote them and retry.
  bool demoted = true;
  while (demoted) {
    demoted = false;
    for (size_t b = 0; b < ir.blocks.size(); b++) {
      if (ir.blocks[b].dead) continue;
      bool isHeader = false;
      for (int p : ir.blocks[b].preds)
        if (ir.dominates(idom, int(b), p)) isHeader = true;
      if (!isHeader) continue;
      int term = ir.terminatorOf(int(b));
      if (term < 0) continue;
      const IrInstr& t = ir.instr(term);
      bool runtimeCond = t.op == IrOp::Branch &&
                         cls[size_t(t.args[0])] == StageClass::Runtime;
      if (!runtimeCond) continue;
      for (int id : ir.blocks[b].instrs) {
        const IrInstr& i = ir.instr(id);
        if (i.dead || i.op != IrOp::Phi) continue;
        if (cls[size_t(id)] == StageClass::JitConst) {
          cls[size_t(id)] = StageClass::Runtime;
          result.loopDemotions++;
          demoted = true;
        }
      }
    }
    if (demoted) propagate();
  }

  // count staged-phi demotions for the pass trace
  for (size_t i = 0; i < ir.instrs.size(); i++) {
    const IrInstr& ins = ir.instrs[i];
    if (ins.dead || ins.op != IrOp::Phi) continue;
    if (cls[i] != StageClass::Runtime) continue;
    bool allArgsStaged = true;
    for (int a : ins.args)
      allArgsStaged &= cls[size_t(a)] != StageClass::Runtime;
    if (allArgsStaged) result.phiDemotions++;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Generator emission

namespace {

struct EmitAbort {};

class GeneratorEmitter {
 public:
  GeneratorEmitter(const Ir& ir, const TranslationResult& translation)
      : ir_(ir), stages_(stageAnalysis(ir)) {
    g_.name = ir.name;
    g_.opcode = ir.opcode;
    g_.operandCount = ir.operandCount;
    g_.isPrimitive = ir.kind == HandlerKind::Primitive;
    g_.numArgs = ir.numArgs;
    g_.installClassGuard = translation.installClassGuard;
  }

  EmissionResult run() {
    EmissionResult result;
    try {
      usesLeft_ = countUses();
      valueVar_.assign(ir_.instrs.size(), -1);
      valueReg_.assign(ir_.instrs.size(), -1);
      visited_.assign(ir_.blocks.size(), false);
      sinks_.push_back(&g_.ops);
      if (ir_.annotations.isMapped && !g_.isPrimitive) op({GenOpKind::AnnotateBytecode});
      emitRegion(ir_.entry, -1);
    } catch (const EmitAbort&) {
      if (diags_.empty()) diags_.push_back({ir_.name, "emission aborted"});
    }
    result.diagnostics = diags_;
    if (diags_.empty()) result.program = std::move(g_);
    return result;
  }

 private:
  const Ir& ir_;
  StagingResult stages_;
  GeneratorProgram g_;
  std::vector<Diagnostic> diags_;
  std::vector<int> usesLeft_;
  std::vector<int> valueVar_;   // staged var per IR value
  std::vector<int> valueReg_;   // register var (or concrete reg in primitives)
  std::vector<bool> visited_;
  std::vector<std::vector<GenOp>*> sinks_;
  int nextLabel_ = 0;
  int primFailLabel_ = -1;
  // primitive fixed-register pool
  std::vector<uint8_t> primScratchPool_{kRegTemp, kRegClass, kRegSendNumArgs};
  std::set<uint8_t> primScratchInUse_;

  [[noreturn]] void fail(const std::string& msg) {
    diags_.push_back({ir_.name, msg});
    throw EmitAbort{};
  }

  void op(GenOp o) { sinks_.back()->push_back(std::move(o)); }

  bool staged(int id) const { return stages_.classes[size_t(id)] == StageClass::JitConst; }

  std::vector<int> countUses() {
    std::vector<int> uses(ir_.instrs.size(), 0);
    for (size_t i = 0; i < ir_.instrs.size(); i++) {
      const IrInstr& ins = ir_.instrs[i];
      if (ins.dead || ir_.blocks[size_t(ins.block)].dead) continue;
      for (int a : ins.args) uses[size_t(a)]++;
    }
    return uses;
  }

  int newVar(GenVarKind kind) {
    g_.varKinds.push_back(kind);
    return g_.varCount++;
  }

  int newLabel() { return nextLabel_++; }

  int primFailLabel() {
    if (primFailLabel_ < 0) primFailLabel_ = newLabel();
    return primFailLabel_;
  }

  // ---- staged values ----

  int stagedVar(int id) {
    if (valueVar_[size_t(id)] >= 0) return valueVar_[size_t(id)];
    const IrInstr& i = ir_.instr(id);
    if (!staged(id)) fail("value is not staged where a staged value is required");
    int var = newVar(GenVarKind::Staged);
    GenOp o{GenOpKind::StagedCompute};
    o.dst = var;
    switch (i.op) {
      case IrOp::Constant:
        o.sop = StagedOp::Const;
        o.imm = i.imm;
        break;
      case IrOp::StageSource:
        switch (i.stage) {
          case StageKind::BytecodePc: o.sop = StagedOp::SourcePc; break;
          case StageKind::Byte1: o.sop = StagedOp::SourceByte1; break;
          case StageKind::Byte2: o.sop = StagedOp::SourceByte2; break;
          case StageKind::NilObject: o.sop = StagedOp::SourceNil; break;
          case StageKind::TrueObject: o.sop = StagedOp::SourceTrue; break;
          case StageKind::FalseObject: o.sop = StagedOp::SourceFalse; break;
          case StageKind::Method:
            fail("the method reference has no staged value form");
        }
        break;
      case IrOp::StageHint: {
        // lifted load: methods are immutable, so the slot index is staged
        const IrInstr& load = ir_.instr(i.args[0]);
        if (load.op == IrOp::StageSource) {
          valueVar_[size_t(id)] = stagedVar(i.args[0]);
          g_.varCount--;  // the speculative var was not used
          g_.varKinds.pop_back();
          return valueVar_[size_t(id)];
        }
        if (load.op != IrOp::LoadSlot) fail("stage hint on a non-load");
        o.sop = StagedOp::LoadMethodSlot;
        o.a = stagedVar(load.args[1]);
        break;
      }
      case IrOp::Copy:
        valueVar_[size_t(id)] = stagedVar(i.args[0]);
        g_.varCount--;
        g_.varKinds.pop_back();
        return valueVar_[size_t(id)];
      case IrOp::Add: case IrOp::Sub: case IrOp::Mul: case IrOp::BitAnd:
      case IrOp::ShiftLeft: case IrOp::ShiftRight: {
        switch (i.op) {
          case IrOp::Add: o.sop = StagedOp::Add; break;
          case IrOp::Sub: o.sop = StagedOp::Sub; break;
          case IrOp::Mul: o.sop = StagedOp::Mul; break;
          case IrOp::BitAnd: o.sop = StagedOp::BitAnd; break;
          case IrOp::ShiftLeft: o.sop = StagedOp::Shl; break;
          default: o.sop = StagedOp::Shr; break;
        }
        o.a = stagedVar(i.args[0]);
        o.b = stagedVar(i.args[1]);
        break;
      }
      case IrOp::Compare:
        o.sop = StagedOp::Cmp;
        o.cond = i.cond;
        o.a = stagedVar(i.args[0]);
        o.b = stagedVar(i.args[1]);
        break;
      case IrOp::Phi:
        fail("staged phi reached value emission without a variable");
      default:
        fail("unexpected staged operation");
    }
    op(std::move(o));
    valueVar_[size_t(id)] = var;
    return var;
  }

  int stagedConst(int64_t v) {
    int var = newVar(GenVarKind::Staged);
    GenOp o{GenOpKind::StagedCompute};
    o.dst = var;
    o.sop = StagedOp::Const;
    o.imm = v;
    op(std::move(o));
    return var;
  }

  // ---- registers ----

  int allocReg() {
    if (g_.isPrimitive) {
      for (uint8_t r : primScratchPool_) {
        if (!primScratchInUse_.count(r)) {
          primScratchInUse_.insert(r);
          int var = newVar(GenVarKind::Register);
          fixedRegOfVar_[var] = r;
          return var;
        }
      }
      fail("primitive needs more than three scratch registers");
    }
    int var = newVar(GenVarKind::Register);
    GenOp o{GenOpKind::AllocateReg};
    o.dst = var;
    op(std::move(o));
    return var;
  }

  std::map<int, uint8_t> fixedRegOfVar_;  // primitive mode

  void releaseReg(int var) {
    if (g_.isPrimitive) {
      auto it = fixedRegOfVar_.find(var);
      if (it != fixedRegOfVar_.end()) primScratchInUse_.erase(it->second);
      return;
    }
    GenOp o{GenOpKind::ReleaseReg};
    o.a = var;
    op(std::move(o));
  }

  HoleKind regHoleKind() const {
    return g_.isPrimitive ? HoleKind::FixedReg : HoleKind::VarReg;
  }

  int regHoleValue(int var) const {
    if (!g_.isPrimitive) return var;
    auto it = fixedRegOfVar_.find(var);
    if (it != fixedRegOfVar_.end()) return it->second;
    return var;  // pre-bound fixed register encoded directly
  }

  int fixedVar(uint8_t reg) {
    int var = newVar(GenVarKind::Register);
    fixedRegOfVar_[var] = reg;
    return var;
  }

  // Emits an RTL template with common hole patterns.
  GenOp rtl(RtlOp o) {
    GenOp g{GenOpKind::EmitRtl};
    g.rtl.op = o;
    return g;
  }

  void emitMoveRR(int srcVar, int dstVar) {
    GenOp o = rtl(RtlOp::MoveRR);
    o.rtl.srcKind = regHoleKind();
    o.rtl.src = regHoleValue(srcVar);
    o.rtl.dstKind = regHoleKind();
    o.rtl.dst = regHoleValue(dstVar);
    op(std::move(o));
  }

  void emitFixedMoveToReg(uint8_t fixedSrc, int dstVar) {
    GenOp o = rtl(RtlOp::MoveRR);
    o.rtl.srcKind = HoleKind::FixedReg;
    o.rtl.src = fixedSrc;
    o.rtl.dstKind = regHoleKind();
    o.rtl.dst = regHoleValue(dstVar);
    op(std::move(o));
  }

  void emitMoveToFixed(int srcVar, uint8_t fixedDst) {
    GenOp o = rtl(RtlOp::MoveRR);
    o.rtl.srcKind = regHoleKind();
    o.rtl.src = regHoleValue(srcVar);
    o.rtl.dstKind = HoleKind::FixedReg;
    o.rtl.dst = fixedDst;
    op(std::move(o));
  }

  // register holding an IR value, materializing staged values when needed
  int valueToReg(int id) {
    if (valueReg_[size_t(id)] >= 0) return valueReg_[size_t(id)];
    if (staged(id)) {
      int var = stagedVar(id);
      int reg = g_.isPrimitive ? allocReg() : newVar(GenVarKind::Register);
      GenOp o{GenOpKind::MaterializeStaged};
      o.a = var;
      o.dst = reg;
      if (g_.isPrimitive) {
        o.imm = fixedRegOfVar_[reg];  // concrete register in primitive mode
      }
      op(std::move(o));
      valueReg_[size_t(id)] = reg;
      return reg;
    }
    fail("runtime value has no register at its use");
  }

  void consume(int id) {
    if (--usesLeft_[size_t(id)] > 0) return;
    int reg = valueReg_[size_t(id)];
    if (reg >= 0) {
      releaseReg(reg);
      valueReg_[size_t(id)] = -1;
    }
  }

  // ---- regions ----

  struct RegionEnd {
    bool fellThrough = false;
    // block whose edge reached the stop block, for phi argument selection;
    // -1 when a nested merge already resolved the stop block's phis
    int fromBlock = -1;
  };

  struct BranchResult {
    bool terminated = false;
    int continueAt = -1;
    int predBlock = -1;
  };

  int findJoin(int a, int b) {
    auto reach = [&](int start) {
      std::set<int> seen;
      std::vector<int> work{start};
      while (!work.empty()) {
        int x = work.back();
        work.pop_back();
        if (!seen.insert(x).second) continue;
        for (int s : ir_.blocks[size_t(x)].succs) work.push_back(s);
      }
      return seen;
    };
    std::set<int> ra = reach(a), rb = reach(b);
    std::vector<int> rpo = ir_.reversePostorder();
    for (int blockId : rpo)
      if (ra.count(blockId) && rb.count(blockId)) return blockId;
    return -1;
  }

  bool isLoopHeader(int block) {
    std::vector<int> idom = ir_.dominators();
    for (int p : ir_.blocks[size_t(block)].preds)
      if (ir_.dominates(idom, block, p)) return true;
    return false;
  }

  std::set<int> loopBlocks(int header) {
    std::vector<int> idom = ir_.dominators();
    std::set<int> blocks{header};
    std::vector<int> work;
    for (int p : ir_.blocks[size_t(header)].preds)
      if (ir_.dominates(idom, header, p)) work.push_back(p);
    while (!work.empty()) {
      int x = work.back();
      work.pop_back();
      if (!blocks.insert(x).second) continue;
      for (int p : ir_.blocks[size_t(x)].preds)
        if (p != header) work.push_back(p);
    }
    return blocks;
  }

  int predIndex(int block, int pred) {
    const auto& preds = ir_.blocks[size_t(block)].preds;
    for (size_t i = 0; i < preds.size(); i++)
      if (preds[i] == pred) return int(i);
    fail("phi edge without a predecessor");
  }

  // Emits straight-line (non-phi, non-terminator) instructions of a block.
  void emitBody(int block) {
    for (int id : ir_.blocks[size_t(block)].instrs) {
      const IrInstr& i = ir_.instr(id);
      if (i.dead || i.op == IrOp::Phi || irOpIsTerminator(i.op)) continue;
      emitInstr(id);
    }
  }

  RegionEnd emitRegion(int block, int stop) {
    int prev = -1;
    while (true) {
      if (block == stop) return {true, prev};
      if (block < 0) return {false, -1};
      if (visited_[size_t(block)]) fail("control flow revisits a block");
      visited_[size_t(block)] = true;

      if (isLoopHeader(block)) {
        int exit = emitLoop(block);
        prev = block;  // the header branches to the exit block
        block = exit;
        continue;
      }

      emitBody(block);
      int termId = ir_.terminatorOf(block);
      const IrInstr& term = ir_.instr(termId);
      switch (term.op) {
        case IrOp::Jump: {
          prev = block;
          block = ir_.blocks[size_t(block)].succs[0];
          continue;
        }
        case IrOp::Branch: {
          BranchResult br = emitBranch(block, term, stop);
          if (br.terminated) return {false, -1};
          prev = br.predBlock;
          block = br.continueAt;
          continue;
        }
        case IrOp::CheckedAdd: case IrOp::CheckedSub: case IrOp::CheckedMul: {
          prev = block;
          block = emitChecked(block, termId);
          continue;
        }
        case IrOp::JumpToBytecode: {
          op({GenOpKind::SsFlush});
          GenOp j{GenOpKind::EmitJumpToFixup};
          j.a = stagedVar(term.args[0]);
          op(std::move(j));
          return {false, -1};
        }
        case IrOp::Return:
          emitReturn(term.args[0]);
          return {false, -1};
        case IrOp::PrimFail:
          if (!g_.isPrimitive) fail("primitive failure in a bytecode handler");
          op({GenOpKind::PrimFailJump});
          return {false, -1};
        case IrOp::DeoptPoint:
          op({GenOpKind::SsFlush});
          op({GenOpKind::Deoptimize});
          return {false, -1};
        case IrOp::EndHandler:
          return {false, -1};
        default:
          fail("unexpected terminator");
      }
    }
    return {true, -1};
  }

  void emitReturn(int value) {
    GenOp o{g_.isPrimitive ? GenOpKind::PrimReturn : GenOpKind::FrameReturn};
    if (staged(value)) {
      o.b = stagedVar(value);
    } else {
      o.a = regHoleValue(valueToReg(value));
      if (!g_.isPrimitive) o.a = valueToReg(value);
    }
    consume(value);
    op(std::move(o));
  }

  // Branch emission; returns {fellThrough=true, fromBlock=merge} when control
  // continues at a merge block, otherwise a terminated RegionEnd.
  RegionEnd emitBranch(int block, const IrInstr& term, int stop) {
    int condId = term.args[0];
    int succTrue = ir_.blocks[size_t(block)].succs[0];
    int succFalse = ir_.blocks[size_t(block)].succs[1];
    consume(condId);

    if (staged(condId)) {
      int condVar = stagedVar(condId);
      int merge = findJoin(succTrue, succFalse);
      // pre-create variables/registers for merge phis
      std::vector<std::tuple<int, int, bool>> phis;  // (phi id, var, isStaged)
      if (merge >= 0) {
        for (int id : ir_.blocks[size_t(merge)].instrs) {
          const IrInstr& ins = ir_.instr(id);
          if (ins.dead || ins.op != IrOp::Phi) continue;
          if (staged(id)) {
            int var = newVar(GenVarKind::Staged);
            valueVar_[size_t(id)] = var;
            phis.emplace_back(id, var, true);
          } else {
            int reg = allocReg();
            valueReg_[size_t(id)] = reg;
            phis.emplace_back(id, reg, false);
          }
        }
      }
      GenOp branch{GenOpKind::StagedIf};
      branch.a = condVar;
      auto emitArm = [&](int entry, std::vector<GenOp>& sink) {
        sinks_.push_back(&sink);
        RegionEnd end = emitRegion(entry, merge);
        if (end.fellThrough && merge >= 0) {
          int pi = predIndex(merge, end.fromBlock);
          for (auto& [phiId, var, isStaged] : phis) {
            int argVal = ir_.instr(phiId).args[size_t(pi)];
            if (isStaged) {
              GenOp assign{GenOpKind::StagedCompute};
              assign.dst = var;
              assign.sop = StagedOp::Copy;
              assign.a = stagedVar(argVal);
              op(std::move(assign));
            } else {
              emitMoveRR(valueToReg(argVal), var);
            }
            consume(argVal);
          }
        }
        sinks_.pop_back();
        return end;
      };
      RegionEnd thenEnd = emitArm(succTrue, branch.body);
      RegionEnd elseEnd = emitArm(succFalse, branch.elseBody);
      op(std::move(branch));
      if (merge >= 0 && (thenEnd.fellThrough || elseEnd.fellThrough))
        return {true, merge};
      return {false, -1};
    }

    // run-time branch
    const IrInstr& cond = ir_.instr(condId);
    if (cond.op != IrOp::Compare) fail("runtime branch on a non-comparison");

    // primitive fast exit: a bare fail arm collapses to a conditional jump
    // to the shared fail label
    auto bareTerminator = [&](int b, IrOp kind) {
      int live = 0, termId2 = ir_.terminatorOf(b);
      for (int id : ir_.blocks[size_t(b)].instrs)
        if (!ir_.instr(id).dead) live++;
      return live == 1 && termId2 >= 0 && ir_.instr(termId2).op == kind &&
             ir_.blocks[size_t(b)].preds.size() == 1;
    };
    if (g_.isPrimitive && bareTerminator(succTrue, IrOp::PrimFail)) {
      emitCompareJump(cond, /*jumpWhenTrue=*/true, primFailLabel());
      visited_[size_t(succTrue)] = true;
      return {true, succFalse};
    }
    if (g_.isPrimitive && bareTerminator(succFalse, IrOp::PrimFail)) {
      emitCompareJump(cond, /*jumpWhenTrue=*/false, primFailLabel());
      visited_[size_t(succFalse)] = true;
      return {true, succTrue};
    }

    int merge = findJoin(succTrue, succFalse);
    std::vector<std::tuple<int, int>> regPhis;  // (phi id, reg var)
    if (merge >= 0) {
      for (int id : ir_.blocks[size_t(merge)].instrs) {
        const IrInstr& ins = ir_.instr(id);
        if (ins.dead || ins.op != IrOp::Phi) continue;
        int reg = allocReg();
        valueReg_[size_t(id)] = reg;
        regPhis.emplace_back(id, reg);
      }
    }
    int elseLabel = newLabel();
    int mergeLabel = merge >= 0 ? newLabel() : -1;
    emitCompareJump(cond, /*jumpWhenTrue=*/false, elseLabel);

    auto finishArm = [&](RegionEnd end) {
      if (end.fellThrough && merge >= 0) {
        int pi = predIndex(merge, end.fromBlock);
        for (auto& [phiId, reg] : regPhis) {
          int argVal = ir_.instr(phiId).args[size_t(pi)];
          emitMoveRR(valueToReg(argVal), reg);
          consume(argVal);
        }
      }
      return end.fellThrough;
    };
    bool thenFell = finishArm(emitRegion(succTrue, merge));
    if (thenFell) {
      GenOp j = rtl(RtlOp::JumpAlways);
      j.rtl.immKind = HoleKind::LabelLocal;
      j.rtl.label = mergeLabel;
      op(std::move(j));
    }
    GenOp l{GenOpKind::Label};
    l.imm = elseLabel;
    op(std::move(l));
    bool elseFell = finishArm(emitRegion(succFalse, merge));
    if (merge >= 0 && (thenFell || elseFell)) {
      GenOp ml{GenOpKind::Label};
      ml.imm = mergeLabel;
      op(std::move(ml));
      return {true, merge};
    }
    return {false, -1};
  }

  // Emits the compare and one conditional jump; jumpWhenTrue selects the
  // polarity. Consumes the compare's operands.
  void emitCompareJump(const IrInstr& cond, bool jumpWhenTrue, int label) {
    int a = cond.args[0], b = cond.args[1];
    IrCond c = cond.cond;
    // normalize le/gt by swapping operands
    if (c == IrCond::Le) {
      std::swap(a, b);
      c = IrCond::Ge;
    } else if (c == IrCond::Gt) {
      std::swap(a, b);
      c = IrCond::Lt;
    }
    bool aStaged = staged(a), bStaged = staged(b);
    if (aStaged && !bStaged &&
        (c == IrCond::Eq || c == IrCond::Ne || c == IrCond::TestMaskNonZero)) {
      std::swap(a, b);
      std::swap(aStaged, bStaged);
    }
    GenOp cmp = rtl(RtlOp::CmpRR);
    if (c == IrCond::TestMaskNonZero) {
      cmp.rtl.op = RtlOp::TstCqR;
      if (!bStaged) fail("test mask must be staged");
      cmp.rtl.dstKind = regHoleKind();
      cmp.rtl.dst = regHoleValue(valueToReg(a));
      cmp.rtl.immKind = HoleKind::ImmVar;
      cmp.rtl.imm = stagedVar(b);
    } else if (bStaged) {
      cmp.rtl.op = RtlOp::CmpCqR;
      cmp.rtl.dstKind = regHoleKind();
      cmp.rtl.dst = regHoleValue(valueToReg(a));
      cmp.rtl.immKind = HoleKind::ImmVar;
      cmp.rtl.imm = stagedVar(b);
    } else if (aStaged) {
      // materialize the staged left operand for ordered comparisons
      cmp.rtl.op = RtlOp::CmpRR;
      cmp.rtl.dstKind = regHoleKind();
      cmp.rtl.dst = regHoleValue(valueToReg(a));
      cmp.rtl.srcKind = regHoleKind();
      cmp.rtl.src = regHoleValue(valueToReg(b));
    } else {
      cmp.rtl.op = RtlOp::CmpRR;
      cmp.rtl.dstKind = regHoleKind();
      cmp.rtl.dst = regHoleValue(valueToReg(a));
      cmp.rtl.srcKind = regHoleKind();
      cmp.rtl.src = regHoleValue(valueToReg(b));
    }
    op(std::move(cmp));
    RtlOp jcc;
    switch (c) {
      case IrCond::Eq: jcc = jumpWhenTrue ? RtlOp::JumpZero : RtlOp::JumpNonZero; break;
      case IrCond::Ne: jcc = jumpWhenTrue ? RtlOp::JumpNonZero : RtlOp::JumpZero; break;
      case IrCond::Lt: jcc = jumpWhenTrue ? RtlOp::JumpLess : RtlOp::JumpGreaterOrEqual; break;
      case IrCond::Ge: jcc = jumpWhenTrue ? RtlOp::JumpGreaterOrEqual : RtlOp::JumpLess; break;
      case IrCond::TestMaskNonZero:
        jcc = jumpWhenTrue ? RtlOp::JumpNonZero : RtlOp::JumpZero;
        break;
      default:
        fail("unsupported comparison");
    }
    GenOp j = rtl(jcc);
    j.rtl.immKind = HoleKind::LabelLocal;
    j.rtl.label = label;
    op(std::move(j));
    consume(cond.args[0]);
    consume(cond.args[1]);
  }

  // Checked arithmetic: emits the tagged sequence, a JumpOverflow into the
  // overflow region (deferred or the primitive fail label), and continues in
  // the ok successor with the result register holding the value.
  int emitChecked(int block, int termId) {
    const IrInstr& term = ir_.instr(termId);
    int okSucc = ir_.blocks[size_t(block)].succs[0];
    int ovfSucc = ir_.blocks[size_t(block)].succs[1];
    int rcvr = term.args[0], arg = term.args[1];

    int m = allocReg();
    if (term.op == IrOp::CheckedAdd) {
      emitMoveRR(valueToReg(arg), m);
      GenOp untag = rtl(RtlOp::AddCqR);
      untag.rtl.dstKind = regHoleKind();
      untag.rtl.dst = regHoleValue(m);
      untag.rtl.immKind = HoleKind::Imm;
      untag.rtl.imm = -1;
      op(std::move(untag));
      GenOp add = rtl(RtlOp::AddRR);
      add.rtl.srcKind = regHoleKind();
      add.rtl.src = regHoleValue(valueToReg(rcvr));
      add.rtl.dstKind = regHoleKind();
      add.rtl.dst = regHoleValue(m);
      op(std::move(add));
      emitOverflowJump(ovfSucc);
    } else if (term.op == IrOp::CheckedSub) {
      emitMoveRR(valueToReg(rcvr), m);
      GenOp sub = rtl(RtlOp::SubRR);
      sub.rtl.srcKind = regHoleKind();
      sub.rtl.src = regHoleValue(valueToReg(arg));
      sub.rtl.dstKind = regHoleKind();
      sub.rtl.dst = regHoleValue(m);
      op(std::move(sub));
      emitOverflowJump(ovfSucc);
      GenOp retag = rtl(RtlOp::AddCqR);
      retag.rtl.dstKind = regHoleKind();
      retag.rtl.dst = regHoleValue(m);
      retag.rtl.immKind = HoleKind::Imm;
      retag.rtl.imm = 1;
      op(std::move(retag));
    } else {
      int n = allocReg();
      emitMoveRR(valueToReg(arg), m);
      GenOp u1 = rtl(RtlOp::AsrCqR);
      u1.rtl.dstKind = regHoleKind();
      u1.rtl.dst = regHoleValue(m);
      u1.rtl.immKind = HoleKind::Imm;
      u1.rtl.imm = 1;
      op(std::move(u1));
      emitMoveRR(valueToReg(rcvr), n);
      GenOp u2 = rtl(RtlOp::AsrCqR);
      u2.rtl.dstKind = regHoleKind();
      u2.rtl.dst = regHoleValue(n);
      u2.rtl.immKind = HoleKind::Imm;
      u2.rtl.imm = 1;
      op(std::move(u2));
      GenOp mul = rtl(RtlOp::MulRR);
      mul.rtl.srcKind = regHoleKind();
      mul.rtl.src = regHoleValue(n);
      mul.rtl.dstKind = regHoleKind();
      mul.rtl.dst = regHoleValue(m);
      op(std::move(mul));
      emitOverflowJump(ovfSucc);
      GenOp retag1 = rtl(RtlOp::LslCqR);
      retag1.rtl.dstKind = regHoleKind();
      retag1.rtl.dst = regHoleValue(m);
      retag1.rtl.immKind = HoleKind::Imm;
      retag1.rtl.imm = 1;
      op(std::move(retag1));
      emitOverflowJump(ovfSucc);
      GenOp retag2 = rtl(RtlOp::AddCqR);
      retag2.rtl.dstKind = regHoleKind();
      retag2.rtl.dst = regHoleValue(m);
      retag2.rtl.immKind = HoleKind::Imm;
      retag2.rtl.imm = 1;
      op(std::move(retag2));
      releaseReg(n);
    }
    consume(rcvr);
    consume(arg);
    valueReg_[size_t(termId)] = m;
    return okSucc;
  }

  // overflow edges: primitives collapse to the shared fail label; bytecode
  // overflow regions emit deferred with the compile-time state snapshot
  void emitOverflowJump(int ovfSucc) {
    auto bareFail = [&]() {
      int live = 0;
      for (int id : ir_.blocks[size_t(ovfSucc)].instrs)
        if (!ir_.instr(id).dead) live++;
      int t = ir_.terminatorOf(ovfSucc);
      return live == 1 && t >= 0 && ir_.instr(t).op == IrOp::PrimFail;
    };
    if (g_.isPrimitive && bareFail()) {
      GenOp j = rtl(RtlOp::JumpOverflow);
      j.rtl.immKind = HoleKind::LabelLocal;
      j.rtl.label = primFailLabel();
      op(std::move(j));
      visited_[size_t(ovfSucc)] = true;
      return;
    }
    int label = newLabel();
    GenOp j = rtl(RtlOp::JumpOverflow);
    j.rtl.immKind = HoleKind::LabelLocal;
    j.rtl.label = label;
    op(std::move(j));
    if (!visited_[size_t(ovfSucc)]) {
      GenOp deferred{GenOpKind::DeferredRegion};
      deferred.imm = label;
      sinks_.push_back(&deferred.body);
      emitRegion(ovfSucc, -1);
      sinks_.pop_back();
      op(std::move(deferred));
    }
  }

  int emitLoop(int header) {
    std::set<int> loop = loopBlocks(header);
    int termId = ir_.terminatorOf(header);
    const IrInstr& term = ir_.instr(termId);
    if (term.op != IrOp::Branch) fail("loop header without a branch");
    int succ0 = ir_.blocks[size_t(header)].succs[0];
    int succ1 = ir_.blocks[size_t(header)].succs[1];
    bool bodyIsTrue = loop.count(succ0) > 0;
    int bodyBlock = bodyIsTrue ? succ0 : succ1;
    int exitBlock = bodyIsTrue ? succ1 : succ0;
    if (loop.count(exitBlock)) fail("loop without a unique exit");

    // collect phis with entry/back-edge argument per pred
    struct LoopPhi {
      int id;
      int entryArg;
      int backArg;
    };
    std::vector<LoopPhi> phis;
    int entryPred = -1, backPred = -1;
    std::vector<int> idom = ir_.dominators();
    for (int p : ir_.blocks[size_t(header)].preds) {
      if (ir_.dominates(idom, header, p)) backPred = p;
      else entryPred = p;
    }
    if (entryPred < 0 || backPred < 0) fail("loop header edges unresolved");
    int entryIdx = predIndex(header, entryPred);
    int backIdx = predIndex(header, backPred);
    for (int id : ir_.blocks[size_t(header)].instrs) {
      const IrInstr& ins = ir_.instr(id);
      if (ins.dead || ins.op != IrOp::Phi) continue;
      phis.push_back({id, ins.args[size_t(entryIdx)], ins.args[size_t(backIdx)]});
    }

    int condId = term.args[0];
    bool stagedLoop = staged(condId);
    if (stagedLoop) {
      // preheader: bind loop variables to their entry values
      for (auto& phi : phis) {
        if (!staged(phi.id)) fail("staged loop with a runtime variable");
        int var = newVar(GenVarKind::Staged);
        GenOp init{GenOpKind::StagedCompute};
        init.dst = var;
        init.sop = StagedOp::Copy;
        init.a = stagedVar(phi.entryArg);
        op(std::move(init));
        valueVar_[size_t(phi.id)] = var;
        consume(phi.entryArg);
      }
      GenOp loopOp{GenOpKind::StagedLoop};
      // condition ops re-evaluated each iteration
      sinks_.push_back(&loopOp.elseBody);  // elseBody carries the header ops
      for (int id : ir_.blocks[size_t(header)].instrs) {
        const IrInstr& ins = ir_.instr(id);
        if (ins.dead || ins.op == IrOp::Phi || irOpIsTerminator(ins.op)) continue;
        if (!staged(id)) fail("runtime computation in a staged loop header");
        valueVar_[size_t(id)] = -1;  // recompute per iteration
        stagedVar(id);
      }
      int condVar = stagedVar(condId);
      if (!bodyIsTrue) {
        int zero = stagedConst(0);
        int inverted = newVar(GenVarKind::Staged);
        GenOp inv{GenOpKind::StagedCompute};
        inv.dst = inverted;
        inv.sop = StagedOp::Cmp;
        inv.cond = IrCond::Eq;
        inv.a = condVar;
        inv.b = zero;
        op(std::move(inv));
        condVar = inverted;
      }
      sinks_.pop_back();
      loopOp.a = condVar;
      consume(condId);

      sinks_.push_back(&loopOp.body);
      RegionEnd end = emitRegion(bodyBlock, header);
      if (!end.fellThrough) fail("staged loop body does not reach the header");
      // two-step parallel assignment of the loop variables
      std::vector<int> tmpVars;
      for (auto& phi : phis) {
        int tmp = newVar(GenVarKind::Staged);
        GenOp copy{GenOpKind::StagedCompute};
        copy.dst = tmp;
        copy.sop = StagedOp::Copy;
        copy.a = stagedVar(phi.backArg);
        op(std::move(copy));
        tmpVars.push_back(tmp);
        consume(phi.backArg);
      }
      for (size_t i = 0; i < phis.size(); i++) {
        GenOp assign{GenOpKind::StagedCompute};
        assign.dst = valueVar_[size_t(phis[i].id)];
        assign.sop = StagedOp::Copy;
        assign.a = tmpVars[i];
        op(std::move(assign));
      }
      sinks_.pop_back();
      op(std::move(loopOp));
      return exitBlock;
    }

    // run-time loop
    for (auto& phi : phis) {
      int reg = allocReg();
      valueReg_[size_t(phi.id)] = reg;
      emitMoveRR(valueToReg(phi.entryArg), reg);
      consume(phi.entryArg);
    }
    int headerLabel = newLabel();
    int exitLabel = newLabel();
    GenOp hl{GenOpKind::Label};
    hl.imm = headerLabel;
    op(std::move(hl));
    // header computations (non-phi)
    for (int id : ir_.blocks[size_t(header)].instrs) {
      const IrInstr& ins = ir_.instr(id);
      if (ins.dead || ins.op == IrOp::Phi || irOpIsTerminator(ins.op) ||
          ins.op == IrOp::Compare)
        continue;
      emitInstr(id);
    }
    const IrInstr& cond = ir_.instr(condId);
    if (cond.op != IrOp::Compare) fail("runtime loop on a non-comparison");
    emitCompareJump(cond, /*jumpWhenTrue=*/!bodyIsTrue, exitLabel);
    consume(condId);
    RegionEnd end = emitRegion(bodyBlock, header);
    if (!end.fellThrough) fail("runtime loop body does not reach the header");
    for (auto& phi : phis) {
      emitMoveRR(valueToReg(phi.backArg), valueReg_[size_t(phi.id)]);
      consume(phi.backArg);
    }
    GenOp back = rtl(RtlOp::JumpAlways);
    back.rtl.immKind = HoleKind::LabelLocal;
    back.rtl.label = headerLabel;
    op(std::move(back));
    GenOp el{GenOpKind::Label};
    el.imm = exitLabel;
    op(std::move(el));
    return exitBlock;
  }

  // ---- per-instruction emission ----

  void emitInstr(int id) {
    const IrInstr& i = ir_.instr(id);
    if (staged(id)) {
      // staged pure values materialize lazily at their uses
      if (i.op == IrOp::StoreSlot || i.op == IrOp::StoreTemp || i.op == IrOp::StackPush ||
          i.op == IrOp::StackPop || i.op == IrOp::Send || i.op == IrOp::RuntimeCall)
        fail("effectful operation classified as staged");
      return;
    }
    switch (i.op) {
      case IrOp::Compare:
        return;  // emitted by the consuming branch
      case IrOp::Copy:
        valueReg_[size_t(id)] = valueToReg(i.args[0]);
        return;
      case IrOp::LoadReceiver: {
        if (g_.isPrimitive) {
          valueReg_[size_t(id)] = fixedVar(kRegReceiverResult);
          return;
        }
        op({GenOpKind::EnsureReceiverReg});
        int reg = allocReg();
        emitFixedMoveToReg(kRegReceiverResult, reg);
        valueReg_[size_t(id)] = reg;
        return;
      }
      case IrOp::LoadArg: {
        if (!g_.isPrimitive) fail("argument registers outside a primitive");
        if (i.imm == 0) valueReg_[size_t(id)] = fixedVar(kRegArg0);
        else if (i.imm == 1) valueReg_[size_t(id)] = fixedVar(kRegArg1);
        else fail("more than two register arguments");
        return;
      }
      case IrOp::StackRead: {
        int reg = allocReg();
        GenOp o{GenOpKind::SsValueToReg};
        o.imm = i.imm;
        o.dst = reg;
        op(std::move(o));
        valueReg_[size_t(id)] = reg;
        return;
      }
      case IrOp::StackPush: {
        int v = i.args[0];
        if (staged(v)) {
          GenOp o{GenOpKind::SsPushConstant};
          o.a = stagedVar(v);
          op(std::move(o));
          consume(v);
          return;
        }
        const IrInstr& src = ir_.instr(v);
        if (src.op == IrOp::LoadSlot && usesLeft_[size_t(v)] == 1 &&
            staged(src.args[1]) && valueReg_[size_t(v)] < 0) {
          // deferred slot push: keep a base register plus offset on the
          // abstract stack instead of loading now
          int base = valueToReg(src.args[0]);
          int off = slotOffsetVar(src.args[1]);
          GenOp o{GenOpKind::SsPushBaseOffset};
          o.a = base;
          o.b = off;
          op(std::move(o));
          // ownership of the base register moves to the abstract stack
          valueReg_[size_t(src.args[0])] = -1;
          consume(src.args[0]);
          consume(v);
          return;
        }
        int reg = valueToReg(v);
        if (usesLeft_[size_t(v)] > 1) {
          int copy = allocReg();
          emitMoveRR(reg, copy);
          reg = copy;
        } else {
          valueReg_[size_t(v)] = -1;  // the stack owns it now
        }
        GenOp o{GenOpKind::SsPushRegister};
        o.a = reg;
        op(std::move(o));
        consume(v);
        return;
      }
      case IrOp::StackPop: {
        GenOp o{GenOpKind::SsPop};
        o.imm = i.imm;
        op(std::move(o));
        return;
      }
      case IrOp::LoadSlot: {
        int base = valueToReg(i.args[0]);
        int reg = allocReg();
        if (staged(i.args[1])) {
          int off = slotOffsetVar(i.args[1]);
          GenOp o = rtl(RtlOp::MoveMwR);
          o.rtl.baseKind = regHoleKind();
          o.rtl.base = regHoleValue(base);
          o.rtl.immKind = HoleKind::ImmVar;
          o.rtl.imm = off;
          o.rtl.dstKind = regHoleKind();
          o.rtl.dst = regHoleValue(reg);
          op(std::move(o));
        } else {
          // dynamic index: address = base + 8 + index*8
          int addr = allocReg();
          emitMoveRR(valueToReg(i.args[1]), addr);
          GenOp shl = rtl(RtlOp::LslCqR);
          shl.rtl.dstKind = regHoleKind();
          shl.rtl.dst = regHoleValue(addr);
          shl.rtl.immKind = HoleKind::Imm;
          shl.rtl.imm = 3;
          op(std::move(shl));
          GenOp add = rtl(RtlOp::AddRR);
          add.rtl.srcKind = regHoleKind();
          add.rtl.src = regHoleValue(base);
          add.rtl.dstKind = regHoleKind();
          add.rtl.dst = regHoleValue(addr);
          op(std::move(add));
          GenOp o = rtl(RtlOp::MoveMwR);
          o.rtl.baseKind = regHoleKind();
          o.rtl.base = regHoleValue(addr);
          o.rtl.immKind = HoleKind::Imm;
          o.rtl.imm = 8;
          o.rtl.dstKind = regHoleKind();
          o.rtl.dst = regHoleValue(reg);
          op(std::move(o));
          releaseReg(addr);
        }
        consume(i.args[0]);
        consume(i.args[1]);
        valueReg_[size_t(id)] = reg;
        return;
      }
      case IrOp::StoreSlot: {
        int base = valueToReg(i.args[0]);
        int value = valueToReg(i.args[2]);
        if (staged(i.args[1])) {
          int off = slotOffsetVar(i.args[1]);
          GenOp o = rtl(RtlOp::MoveRMw);
          o.rtl.srcKind = regHoleKind();
          o.rtl.src = regHoleValue(value);
          o.rtl.baseKind = regHoleKind();
          o.rtl.base = regHoleValue(base);
          o.rtl.immKind = HoleKind::ImmVar;
          o.rtl.imm = off;
          op(std::move(o));
        } else {
          int addr = allocReg();
          emitMoveRR(valueToReg(i.args[1]), addr);
          GenOp shl = rtl(RtlOp::LslCqR);
          shl.rtl.dstKind = regHoleKind();
          shl.rtl.dst = regHoleValue(addr);
          shl.rtl.immKind = HoleKind::Imm;
          shl.rtl.imm = 3;
          op(std::move(shl));
          GenOp add = rtl(RtlOp::AddRR);
          add.rtl.srcKind = regHoleKind();
          add.rtl.src = regHoleValue(base);
          add.rtl.dstKind = regHoleKind();
          add.rtl.dst = regHoleValue(addr);
          op(std::move(add));
          GenOp o = rtl(RtlOp::MoveRMw);
          o.rtl.srcKind = regHoleKind();
          o.rtl.src = regHoleValue(value);
          o.rtl.baseKind = regHoleKind();
          o.rtl.base = regHoleValue(addr);
          o.rtl.immKind = HoleKind::Imm;
          o.rtl.imm = 8;
          op(std::move(o));
          releaseReg(addr);
          consume(i.args[1]);
        }
        if (staged(i.args[1])) consume(i.args[1]);
        consume(i.args[0]);
        consume(i.args[2]);
        return;
      }
      case IrOp::LoadNumSlots: {
        int base = valueToReg(i.args[0]);
        int reg = allocReg();
        GenOp load = rtl(RtlOp::MoveMwR);
        load.rtl.baseKind = regHoleKind();
        load.rtl.base = regHoleValue(base);
        load.rtl.immKind = HoleKind::Imm;
        load.rtl.imm = 0;
        load.rtl.dstKind = regHoleKind();
        load.rtl.dst = regHoleValue(reg);
        op(std::move(load));
        GenOp shift = rtl(RtlOp::AsrCqR);
        shift.rtl.dstKind = regHoleKind();
        shift.rtl.dst = regHoleValue(reg);
        shift.rtl.immKind = HoleKind::Imm;
        shift.rtl.imm = 32;
        op(std::move(shift));
        consume(i.args[0]);
        valueReg_[size_t(id)] = reg;
        return;
      }
      case IrOp::LoadClassId: {
        int base = valueToReg(i.args[0]);
        int reg = allocReg();
        GenOp load = rtl(RtlOp::MoveMwR);
        load.rtl.baseKind = regHoleKind();
        load.rtl.base = regHoleValue(base);
        load.rtl.immKind = HoleKind::Imm;
        load.rtl.imm = 0;
        load.rtl.dstKind = regHoleKind();
        load.rtl.dst = regHoleValue(reg);
        op(std::move(load));
        GenOp mask = rtl(RtlOp::AndCqR);
        mask.rtl.dstKind = regHoleKind();
        mask.rtl.dst = regHoleValue(reg);
        mask.rtl.immKind = HoleKind::Imm;
        mask.rtl.imm = 0xFFFFFFFFll;
        op(std::move(mask));
        consume(i.args[0]);
        valueReg_[size_t(id)] = reg;
        return;
      }
      case IrOp::LoadTemp: {
        if (!staged(i.args[0])) fail("dynamic temporary index");
        int off = tempOffsetVar(i.args[0]);
        int reg = allocReg();
        GenOp o = rtl(RtlOp::MoveMwR);
        o.rtl.baseKind = HoleKind::FixedReg;
        o.rtl.base = kRegFP;
        o.rtl.immKind = HoleKind::ImmVar;
        o.rtl.imm = off;
        o.rtl.dstKind = regHoleKind();
        o.rtl.dst = regHoleValue(reg);
        op(std::move(o));
        consume(i.args[0]);
        valueReg_[size_t(id)] = reg;
        return;
      }
      case IrOp::StoreTemp: {
        if (!staged(i.args[0])) fail("dynamic temporary index");
        int off = tempOffsetVar(i.args[0]);
        int value = valueToReg(i.args[1]);
        GenOp o = rtl(RtlOp::MoveRMw);
        o.rtl.srcKind = regHoleKind();
        o.rtl.src = regHoleValue(value);
        o.rtl.baseKind = HoleKind::FixedReg;
        o.rtl.base = kRegFP;
        o.rtl.immKind = HoleKind::ImmVar;
        o.rtl.imm = off;
        op(std::move(o));
        consume(i.args[0]);
        consume(i.args[1]);
        return;
      }
      case IrOp::Send: {
        GenOp o{GenOpKind::MarshallSend};
        o.a = stagedVar(i.args[0]);
        if (i.imm >= 0) {
          o.imm = i.imm;
        } else {
          o.imm = -1;
          o.b = stagedVar(i.args[1]);
        }
        op(std::move(o));
        for (int a : i.args) consume(a);
        return;
      }
      case IrOp::RuntimeCall: {
        op({GenOpKind::SsFlush});
        if (i.hook == RuntimeHook::MustBeBoolean) {
          emitMoveToFixed(valueToReg(i.args[0]), kRegTemp);
          GenOp call = rtl(RtlOp::CallTrampoline);
          call.rtl.aux = kTrampMustBeBoolean;
          op(std::move(call));
          consume(i.args[0]);
          return;
        }
        GenOp call = rtl(RtlOp::CallTrampoline);
        call.rtl.aux = kTrampAllocateArray;
        if (staged(i.args[0])) {
          call.rtl.immKind = HoleKind::ImmVar;
          call.rtl.imm = stagedVar(i.args[0]);
        } else {
          emitMoveToFixed(valueToReg(i.args[0]), kRegSendNumArgs);
          call.rtl.immKind = HoleKind::Imm;
          call.rtl.imm = -1;
        }
        op(std::move(call));
        int reg = allocReg();
        emitFixedMoveToReg(kRegTemp, reg);
        consume(i.args[0]);
        valueReg_[size_t(id)] = reg;
        return;
      }
      case IrOp::Phi:
        return;  // handled at merges
      default:
        fail(std::string("no emission rule for ") + irOpName(i.op));
    }
  }

  // staged byte offset of a slot index: 8 + index*8
  int slotOffsetVar(int idxValue) {
    int idxVar = stagedVar(idxValue);
    int eight = stagedConst(8);
    int shifted = newVar(GenVarKind::Staged);
    GenOp shl{GenOpKind::StagedCompute};
    shl.dst = shifted;
    shl.sop = StagedOp::Shl;
    shl.a = idxVar;
    shl.b = stagedConst(3);
    op(std::move(shl));
    int off = newVar(GenVarKind::Staged);
    GenOp add{GenOpKind::StagedCompute};
    add.dst = off;
    add.sop = StagedOp::Add;
    add.a = shifted;
    add.b = eight;
    op(std::move(add));
    return off;
  }

  int tempOffsetVar(int idxValue) {
    int idxVar = stagedVar(idxValue);
    int off = newVar(GenVarKind::Staged);
    GenOp o{GenOpKind::StagedCompute};
    o.dst = off;
    o.sop = StagedOp::FrameTempOffset;
    o.a = idxVar;
    op(std::move(o));
    return off;
  }
};

}  // namespace

EmissionResult emitGenerator(const Ir& ir, const TranslationResult& translation) {
  GeneratorEmitter e(ir, translation);
  return e.run();
}

// ---------------------------------------------------------------------------
// Whole-table meta-compilation

FrontendTable buildFrontendTable(const VMDefinition& vmdef) {
  FrontendTable table;
  table.source = "generated";
  std::map<std::string, int> cache;  // handler name + opcode -> generator index

  for (int opcode = 0; opcode <= 0xFF; opcode++) {
    const TableEntry& entry = vmdef.table[size_t(opcode)];
    FrontendEntry& fe = table.entries[size_t(opcode)];
    fe.handlerName = entry.handlerName;
    fe.operandCount = entry.operandCount;
    fe.branchKind = entry.branchKind;
    fe.stackDelta = entry.stackDelta;
    if (!entry.handler) continue;
    const AnnotationSet& a = entry.handler->annotations;
    fe.isMapped = a.isMapped;
    fe.branch = a.branch;
    fe.isBranchTrue = a.isBranchTrue;
    fe.isBranchFalse = a.isBranchFalse;
    fe.hasSend = a.hasSend;
    fe.needsFrameNever = a.needsFrameNever;

    TranslationResult tr = translateHandler(vmdef, *entry.handler, uint8_t(opcode));
    if (!tr.ir) {
      for (auto& d : tr.diagnostics)
        table.buildLog.push_back(entry.handlerName + "/0x" + std::to_string(opcode) +
                                 ": " + d.message);
      continue;
    }
    PipelineResult pr = runPipeline(*tr.ir);
    if (!pr.fixpoint || !pr.ssaProblems.empty()) {
      table.buildLog.push_back(entry.handlerName + ": optimization pipeline failed");
      continue;
    }
    StagingResult st = stageAnalysis(*tr.ir);
    table.stagedPhiDemotions += st.phiDemotions;
    EmissionResult er = emitGenerator(*tr.ir, tr);
    if (!er.program) {
      for (auto& d : er.diagnostics)
        table.buildLog.push_back(entry.handlerName + ": " + d.message);
      continue;
    }
    er.program->name = entry.handlerName;
    table.generators.push_back(std::move(*er.program));
    fe.generatorIndex = int(table.generators.size()) - 1;
  }

  for (auto& [primId, handler] : vmdef.primitiveHandlers) {
    TranslationResult tr = translatePrimitive(vmdef, *handler);
    if (!tr.ir) {
      for (auto& d : tr.diagnostics)
        table.buildLog.push_back(handler->name + ": " + d.message);
      continue;
    }
    PipelineResult pr = runPipeline(*tr.ir);
    if (!pr.fixpoint || !pr.ssaProblems.empty()) {
      table.buildLog.push_back(handler->name + ": optimization pipeline failed");
      continue;
    }
    EmissionResult er = emitGenerator(*tr.ir, tr);
    if (!er.program) {
      for (auto& d : er.diagnostics)
        table.buildLog.push_back(handler->name + ": " + d.message);
      continue;
    }
    er.program->name = handler->name;
    table.generators.push_back(std::move(*er.program));
    table.primitiveGenerators[primId] = int(table.generators.size()) - 1;
  }
  return table;
}

// ---------------------------------------------------------------------------
// Validation and projection

namespace {

void walkOps(const std::vector<GenOp>& ops, const std::function<void(const GenOp&)>& f) {
  for (auto& o : ops) {
    f(o);
    walkOps(o.body, f);
    walkOps(o.elseBody, f);
  }
}

// path-sensitive flush tracking
bool checkFlushPaths(const std::vector<GenOp>& ops, bool flushed,
                     std::vector<std::string>& problems, const std::string& name) {
  for (auto& o : ops) {
    switch (o.kind) {
      case GenOpKind::SsFlush:
        flushed = true;
        break;
      case GenOpKind::SsPushConstant:
      case GenOpKind::SsPushRegister:
      case GenOpKind::SsPushBaseOffset:
        flushed = false;
        break;
      case GenOpKind::MarshallSend:
        flushed = true;  // marshalling flushes everything below the arguments
        break;
      case GenOpKind::Deoptimize:
        if (!flushed)
          problems.push_back(name + ": deoptimize without a preceding flush");
        break;
      case GenOpKind::EmitRtl:
        if (o.rtl.op == RtlOp::CallTrampoline && !flushed)
          problems.push_back(name + ": trampoline call without a preceding flush");
        break;
      case GenOpKind::StagedIf: {
        bool thenFlushed = checkFlushPaths(o.body, flushed, problems, name);
        bool elseFlushed = checkFlushPaths(o.elseBody, flushed, problems, name);
        flushed = thenFlushed && elseFlushed;
        break;
      }
      case GenOpKind::StagedLoop: {
        checkFlushPaths(o.elseBody, flushed, problems, name);
        bool bodyFlushed = checkFlushPaths(o.body, flushed, problems, name);
        flushed = flushed && bodyFlushed;
        break;
      }
      case GenOpKind::DeferredRegion:
        checkFlushPaths(o.body, flushed, problems, name);
        break;
      default:
        break;
    }
  }
  return flushed;
}

}  // namespace

std::vector<std::string> checkGeneratorInvariants(const GeneratorProgram& g,
                                                  const FrontendEntry& entry) {
  std::vector<std::string> problems;
  if (entry.isMapped && !g.isPrimitive) {
    if (g.ops.empty() || g.ops[0].kind != GenOpKind::AnnotateBytecode)
      problems.push_back(g.name + ": mapped entry must annotate first");
    int annotations = 0;
    walkOps(g.ops, [&](const GenOp& o) {
      if (o.kind == GenOpKind::AnnotateBytecode) annotations++;
    });
    if (annotations != 1)
      problems.push_back(g.name + ": expected exactly one bytecode annotation");
  }
  checkFlushPaths(g.ops, false, problems, g.name);
  walkOps(g.ops, [&](const GenOp& o) {
    auto isStagedVar = [&](int v) {
      return v >= 0 && v < int(g.varKinds.size()) && g.varKinds[size_t(v)] == GenVarKind::Staged;
    };
    if (o.kind == GenOpKind::StagedCompute) {
      if (!isStagedVar(o.dst)) problems.push_back(g.name + ": staged result into a register var");
      if (o.a >= 0 && !isStagedVar(o.a))
        problems.push_back(g.name + ": staged compute reads a runtime register");
      if (o.b >= 0 && !isStagedVar(o.b))
        problems.push_back(g.name + ": staged compute reads a runtime register");
    }
    if (o.kind == GenOpKind::EmitRtl) {
      auto checkHole = [&](HoleKind k, int v) {
        if (k == HoleKind::VarReg && (v < 0 || g.varKinds[size_t(v)] != GenVarKind::Register))
          problems.push_back(g.name + ": register hole bound to a staged var");
      };
      checkHole(o.rtl.dstKind, o.rtl.dst);
      checkHole(o.rtl.srcKind, o.rtl.src);
      checkHole(o.rtl.baseKind, o.rtl.base);
      if (o.rtl.immKind == HoleKind::ImmVar && !isStagedVar(int(o.rtl.imm)))
        problems.push_back(g.name + ": immediate hole bound to a register var");
    }
    if (o.kind == GenOpKind::StagedIf && !isStagedVar(o.a))
      problems.push_back(g.name + ": staged branch on a runtime value");
    if (o.kind == GenOpKind::StagedLoop && !isStagedVar(o.a))
      problems.push_back(g.name + ": staged loop on a runtime value");
  });
  return problems;
}

namespace {

struct Projection {
  std::vector<int64_t> vars;
  int64_t pc;
  uint8_t byte1, byte2;
  int64_t steps = 0;
  bool overBudget = false;

  int64_t evalStaged(const GenOp& o) {
    auto v = [&](int x) { return x >= 0 ? vars[size_t(x)] : 0; };
    switch (o.sop) {
      case StagedOp::Const: return o.imm;
      case StagedOp::Copy: return v(o.a);
      case StagedOp::Add: return int64_t(uint64_t(v(o.a)) + uint64_t(v(o.b)));
      case StagedOp::Sub: return int64_t(uint64_t(v(o.a)) - uint64_t(v(o.b)));
      case StagedOp::Mul: return int64_t(uint64_t(v(o.a)) * uint64_t(v(o.b)));
      case StagedOp::BitAnd: return v(o.a) & v(o.b);
      case StagedOp::Shl: return int64_t(uint64_t(v(o.a)) << (v(o.b) & 63));
      case StagedOp::Shr: return v(o.a) >> (v(o.b) & 63);
      case StagedOp::Cmp:
        switch (o.cond) {
          case IrCond::Eq: return v(o.a) == v(o.b);
          case IrCond::Ne: return v(o.a) != v(o.b);
          case IrCond::Lt: return v(o.a) < v(o.b);
          case IrCond::Le: return v(o.a) <= v(o.b);
          case IrCond::Gt: return v(o.a) > v(o.b);
          case IrCond::Ge: return v(o.a) >= v(o.b);
          case IrCond::TestMaskNonZero: return (v(o.a) & v(o.b)) != 0;
        }
        return 0;
      case StagedOp::SourcePc: return pc;
      case StagedOp::SourceByte1: return byte1;
      case StagedOp::SourceByte2: return byte2;
      case StagedOp::SourceNil: return int64_t(kNilRef);
      case StagedOp::SourceTrue: return int64_t(kTrueRef);
      case StagedOp::SourceFalse: return int64_t(kFalseRef);
      case StagedOp::LoadMethodSlot: return int64_t(tagSmallInt(1).word);
      case StagedOp::FrameTempOffset: return 32 + 8 * v(o.a);
    }
    return 0;
  }

  bool runOps(const std::vector<GenOp>& ops) {
    for (auto& o : ops) {
      if (++steps > 100000) {
        overBudget = true;
        return false;
      }
      switch (o.kind) {
        case GenOpKind::StagedCompute:
          vars[size_t(o.dst)] = evalStaged(o);
          break;
        case GenOpKind::StagedIf:
          if (!runOps(vars[size_t(o.a)] != 0 ? o.body : o.elseBody)) return false;
          break;
        case GenOpKind::StagedLoop:
          while (true) {
            if (!runOps(o.elseBody)) return false;  // condition setup
            if (vars[size_t(o.a)] == 0) break;
            if (!runOps(o.body)) return false;
            if (++steps > 100000) {
              overBudget = true;
              return false;
            }
          }
          break;
        case GenOpKind::DeferredRegion:
          if (!runOps(o.body)) return false;
          break;
        default:
          break;  // emission ops are skipped in the projection
      }
    }
    return true;
  }
};

}  // namespace

bool stagedProjectionTerminates(const GeneratorProgram& g, int64_t pc, uint8_t byte1,
                                uint8_t byte2) {
  Projection p;
  p.vars.assign(size_t(g.varCount), 0);
  p.pc = pc;
  p.byte1 = byte1;
  p.byte2 = byte2;
  p.runOps(g.ops);
  return !p.overBudget;
}

// ---------------------------------------------------------------------------
// Printing

namespace {

const char* stagedOpName(StagedOp s) {
  switch (s) {
    case StagedOp::Const: return "const";
    case StagedOp::Copy: return "copy";
    case StagedOp::Add: return "add";
    case StagedOp::Sub: return "sub";
    case StagedOp::Mul: return "mul";
    case StagedOp::BitAnd: return "bitAnd";
    case StagedOp::Shl: return "shl";
    case StagedOp::Shr: return "shr";
    case StagedOp::Cmp: return "cmp";
    case StagedOp::SourcePc: return "bytecodePC";
    case StagedOp::SourceByte1: return "byte1";
    case StagedOp::SourceByte2: return "byte2";
    case StagedOp::SourceNil: return "nilObject";
    case StagedOp::SourceTrue: return "trueObject";
    case StagedOp::SourceFalse: return "falseObject";
    case StagedOp::LoadMethodSlot: return "methodSlot";
    case StagedOp::FrameTempOffset: return "tempOffset";
  }
  return "?";
}

std::string varName(const GeneratorProgram& g, int v) {
  if (v < 0) return "_";
  if (v < int(g.varKinds.size()) && g.varKinds[size_t(v)] == GenVarKind::Register)
    return "r" + std::to_string(v);
  return "s" + std::to_string(v);
}

std::string holeText(const GeneratorProgram& g, HoleKind k, int v, int64_t imm) {
  switch (k) {
    case HoleKind::FixedReg: return regName(uint8_t(v));
    case HoleKind::VarReg: return varName(g, v);
    case HoleKind::Imm: return std::to_string(imm);
    case HoleKind::ImmVar: return varName(g, int(imm));
    case HoleKind::LabelLocal: return "L" + std::to_string(v);
    default: return "";
  }
}

void printOps(std::ostringstream& out, const GeneratorProgram& g,
              const std::vector<GenOp>& ops, int depth) {
  auto indent = [&]() {
    for (int i = 0; i < depth; i++) out << "  ";
  };
  for (auto& o : ops) {
    indent();
    switch (o.kind) {
      case GenOpKind::StagedCompute:
        out << varName(g, o.dst) << " := " << stagedOpName(o.sop);
        if (o.sop == StagedOp::Const) out << " " << o.imm;
        if (o.sop == StagedOp::Cmp) out << " " << irCondName(o.cond);
        if (o.a >= 0) out << " " << varName(g, o.a);
        if (o.b >= 0) out << " " << varName(g, o.b);
        break;
      case GenOpKind::AllocateReg:
        out << varName(g, o.dst) << " := allocateReg";
        break;
      case GenOpKind::ReleaseReg:
        out << "releaseReg " << varName(g, o.a);
        break;
      case GenOpKind::MaterializeStaged:
        out << varName(g, o.dst) << " := materialize " << varName(g, o.a);
        break;
      case GenOpKind::EmitRtl: {
        out << "emit " << rtlOpName(o.rtl.op);
        std::string dst = holeText(g, o.rtl.dstKind, o.rtl.dst, 0);
        std::string src = holeText(g, o.rtl.srcKind, o.rtl.src, 0);
        std::string base = holeText(g, o.rtl.baseKind, o.rtl.base, 0);
        std::string imm = holeText(g, o.rtl.immKind, o.rtl.imm, o.rtl.imm);
        if (o.rtl.op == RtlOp::CallTrampoline) out << " " << trampolineName(o.rtl.aux);
        if (!imm.empty()) out << " " << imm;
        if (o.rtl.immKind == HoleKind::LabelLocal) out << " L" << o.rtl.label;
        if (!src.empty()) out << " " << src;
        if (!base.empty()) out << " [" << base << "]";
        if (!dst.empty()) out << " -> " << dst;
        break;
      }
      case GenOpKind::SsPushConstant:
        out << "ssPushConstant " << varName(g, o.a);
        break;
      case GenOpKind::SsPushRegister:
        out << "ssPushRegister " << varName(g, o.a);
        break;
      case GenOpKind::SsPushBaseOffset:
        out << "ssPushBaseOffset " << varName(g, o.a) << " offset " << varName(g, o.b);
        break;
      case GenOpKind::SsValueToReg:
        out << varName(g, o.dst) << " := ssValue " << o.imm;
        break;
      case GenOpKind::SsPop:
        out << "ssPop " << o.imm;
        break;
      case GenOpKind::SsFlush:
        out << "ssFlush";
        break;
      case GenOpKind::AnnotateBytecode:
        out << "annotateBytecode";
        break;
      case GenOpKind::MarshallSend:
        out << "marshallSend selector " << varName(g, o.a) << " nargs "
            << (o.imm >= 0 ? std::to_string(o.imm) : varName(g, o.b));
        break;
      case GenOpKind::EnsureReceiverReg:
        out << "ensureReceiverResultReg";
        break;
      case GenOpKind::Deoptimize:
        out << "deoptimize";
        break;
      case GenOpKind::EmitJumpToFixup:
        out << "jump fixup " << varName(g, o.a);
        break;
      case GenOpKind::Label:
        out << "L" << o.imm << ":";
        break;
      case GenOpKind::PrimFailJump:
        out << "jump primFail";
        break;
      case GenOpKind::PrimReturn:
        out << "primReturn " << (o.a >= 0 ? varName(g, o.a) : varName(g, o.b));
        break;
      case GenOpKind::FrameReturn:
        out << "frameReturn " << (o.a >= 0 ? varName(g, o.a) : varName(g, o.b));
        break;
      case GenOpKind::StagedIf:
        out << "stagedIf " << varName(g, o.a) << "\n";
        printOps(out, g, o.body, depth + 1);
        if (!o.elseBody.empty()) {
          indent();
          out << "stagedElse\n";
          printOps(out, g, o.elseBody, depth + 1);
        }
        continue;
      case GenOpKind::StagedLoop:
        out << "stagedLoop cond " << varName(g, o.a) << "\n";
        indent();
        out << " header:\n";
        printOps(out, g, o.elseBody, depth + 1);
        indent();
        out << " body:\n";
        printOps(out, g, o.body, depth + 1);
        continue;
      case GenOpKind::DeferredRegion:
        out << "deferred L" << o.imm << "\n";
        printOps(out, g, o.body, depth + 1);
        continue;
      case GenOpKind::FailCompilation:
        out << "failCompilation " << o.text;
        break;
    }
    out << "\n";
  }
}

}  // namespace

std::string printGenerator(const GeneratorProgram& g) {
  std::ostringstream out;
  char opcodeHex[8];
  std::snprintf(opcodeHex, sizeof opcodeHex, "0x%02X", g.opcode);
  out << "gen_" << g.name;
  if (!g.isPrimitive) out << "_" << opcodeHex;
  out << ":\n";
  printOps(out, g, g.ops, 1);
  return out.str();
}

std::string printFrontendTable(const FrontendTable& table) {
  std::ostringstream out;
  for (int op = 0; op <= 0xFF; op++) {
    const FrontendEntry& e = table.entries[size_t(op)];
    char hex[8];
    std::snprintf(hex, sizeof hex, "0x%02X", op);
    out << hex << " ";
    if (e.handlerName.empty()) {
      out << "unknownBytecode\n";
      continue;
    }
    if (e.generatorIndex < 0) out << "interpreterFallback(" << e.handlerName << ")";
    else out << "gen_" << e.handlerName;
    std::vector<std::string> flags;
    if (e.isMapped) flags.push_back("isMapped");
    if (e.branch) flags.push_back("branch");
    if (e.isBranchTrue) flags.push_back("isBranchTrue");
    if (e.isBranchFalse) flags.push_back("isBranchFalse");
    if (e.hasSend) flags.push_back("hasSend");
    if (e.needsFrameNever) flags.push_back("needsFrameNever");
    if (!flags.empty()) {
      out << " flags=";
      for (size_t i = 0; i < flags.size(); i++) out << (i ? "|" : "") << flags[i];
    }
    if (e.stackDelta) out << " delta=" << *e.stackDelta;
    out << "\n";
  }
  for (auto& [primId, idx] : table.primitiveGenerators)
    out << "prim " << primId << " gen_" << table.generators[size_t(idx)].name << "\n";
  return out.str();
}

std::string printFrontendListing(const FrontendTable& table) {
  std::ostringstream out;
  out << "; " << table.source << " JIT compiler frontend\n\n";
  for (auto& g : table.generators) out << printGenerator(g) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Serialization: magic "DRU1", version, little-endian, length-prefixed

namespace {

struct Writer {
  std::vector<uint8_t> bytes;
  void u8(uint8_t v) { bytes.push_back(v); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; i++) bytes.push_back(uint8_t(v >> (8 * i)));
  }
  void i64(int64_t v) {
    for (int i = 0; i < 8; i++) bytes.push_back(uint8_t(uint64_t(v) >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(uint32_t(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
};

struct Reader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;
  explicit Reader(const std::vector<uint8_t>& b) : bytes(b) {}
  [[noreturn]] void fail() { throw VmError(ErrorKind::ParseError, "corrupt frontend file"); }
  uint8_t u8() {
    if (pos >= bytes.size()) fail();
    return bytes[pos++];
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; i++) v |= uint32_t(u8()) << (8 * i);
    return v;
  }
  int64_t i64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; i++) v |= uint64_t(u8()) << (8 * i);
    return int64_t(v);
  }
  std::string str() {
    uint32_t n = u32();
    if (pos + n > bytes.size()) fail();
    std::string s(bytes.begin() + long(pos), bytes.begin() + long(pos + n));
    pos += n;
    return s;
  }
};

void writeOps(Writer& w, const std::vector<GenOp>& ops);

void writeOp(Writer& w, const GenOp& o) {
  w.u8(uint8_t(o.kind));
  w.u32(uint32_t(o.dst));
  w.u32(uint32_t(o.a));
  w.u32(uint32_t(o.b));
  w.i64(o.imm);
  w.u8(uint8_t(o.sop));
  w.u8(uint8_t(o.cond));
  w.u8(uint8_t(o.rtl.op));
  w.u8(uint8_t(o.rtl.dstKind));
  w.u8(uint8_t(o.rtl.srcKind));
  w.u8(uint8_t(o.rtl.baseKind));
  w.u8(uint8_t(o.rtl.immKind));
  w.u32(uint32_t(o.rtl.dst));
  w.u32(uint32_t(o.rtl.src));
  w.u32(uint32_t(o.rtl.base));
  w.i64(o.rtl.imm);
  w.u32(uint32_t(o.rtl.label));
  w.u32(uint32_t(o.rtl.aux));
  w.str(o.text);
  writeOps(w, o.body);
  writeOps(w, o.elseBody);
}

void writeOps(Writer& w, const std::vector<GenOp>& ops) {
  w.u32(uint32_t(ops.size()));
  for (auto& o : ops) writeOp(w, o);
}

void readOps(Reader& r, std::vector<GenOp>& ops);

GenOp readOp(Reader& r) {
  GenOp o;
  o.kind = GenOpKind(r.u8());
  o.dst = int(r.u32());
  o.a = int(r.u32());
  o.b = int(r.u32());
  o.imm = r.i64();
  o.sop = StagedOp(r.u8());
  o.cond = IrCond(r.u8());
  o.rtl.op = RtlOp(r.u8());
  o.rtl.dstKind = HoleKind(r.u8());
  o.rtl.srcKind = HoleKind(r.u8());
  o.rtl.baseKind = HoleKind(r.u8());
  o.rtl.immKind = HoleKind(r.u8());
  o.rtl.dst = int(r.u32());
  o.rtl.src = int(r.u32());
  o.rtl.base = int(r.u32());
  o.rtl.imm = r.i64();
  o.rtl.label = int(r.u32());
  o.rtl.aux = int(r.u32());
  o.text = r.str();
  readOps(r, o.body);
  readOps(r, o.elseBody);
  return o;
}

void readOps(Reader& r, std::vector<GenOp>& ops) {
  uint32_t n = r.u32();
  for (uint32_t i = 0; i < n; i++) ops.push_back(readOp(r));
}

}  // namespace

std::vector<uint8_t> serializeFrontendTable(const FrontendTable& table) {
  Writer w;
  w.bytes.insert(w.bytes.end(), {'D', 'R', 'U', '1'});
  w.u32(1);  // version
  w.str(table.source);
  w.u32(uint32_t(table.generators.size()));
  for (auto& g : table.generators) {
    w.str(g.name);
    w.u8(g.opcode);
    w.u32(uint32_t(g.operandCount));
    w.u32(uint32_t(g.varCount));
    for (auto k : g.varKinds) w.u8(uint8_t(k));
    w.u8(g.isPrimitive ? 1 : 0);
    w.u32(uint32_t(g.numArgs));
    w.u8(g.installClassGuard ? 1 : 0);
    w.u32(g.installClassGuard.value_or(0));
    writeOps(w, g.ops);
  }
  for (int op = 0; op <= 0xFF; op++) {
    const FrontendEntry& e = table.entries[size_t(op)];
    w.u32(uint32_t(e.generatorIndex));
    w.str(e.handlerName);
    w.u32(uint32_t(e.operandCount));
    w.u8(uint8_t(e.branchKind));
    w.u8(e.stackDelta ? 1 : 0);
    w.i64(e.stackDelta.value_or(0));
    w.u8(e.isMapped);
    w.u8(e.branch);
    w.u8(e.isBranchTrue);
    w.u8(e.isBranchFalse);
    w.u8(e.hasSend);
    w.u8(e.needsFrameNever ? 1 : 0);
    w.i64(e.needsFrameNever.value_or(0));
  }
  w.u32(uint32_t(table.primitiveGenerators.size()));
  for (auto& [primId, idx] : table.primitiveGenerators) {
    w.u32(uint32_t(primId));
    w.u32(uint32_t(idx));
  }
  return std::move(w.bytes);
}

FrontendTable deserializeFrontendTable(const std::vector<uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < 8 || bytes[0] != 'D' || bytes[1] != 'R' || bytes[2] != 'U' ||
      bytes[3] != '1')
    throw VmError(ErrorKind::ParseError, "bad frontend file magic");
  r.pos = 4;
  uint32_t version = r.u32();
  if (version != 1) throw VmError(ErrorKind::ParseError, "unsupported frontend version");
  FrontendTable table;
  table.source = r.str();
  uint32_t genCount = r.u32();
  for (uint32_t i = 0; i < genCount; i++) {
    GeneratorProgram g;
    g.name = r.str();
    g.opcode = r.u8();
    g.operandCount = int(r.u32());
    g.varCount = int(r.u32());
    for (int v = 0; v < g.varCount; v++) g.varKinds.push_back(GenVarKind(r.u8()));
    g.isPrimitive = r.u8() != 0;
    g.numArgs = int(r.u32());
    bool hasGuard = r.u8() != 0;
    uint32_t guard = r.u32();
    if (hasGuard) g.installClassGuard = guard;
    readOps(r, g.ops);
    table.generators.push_back(std::move(g));
  }
  for (int op = 0; op <= 0xFF; op++) {
    FrontendEntry& e = table.entries[size_t(op)];
    e.generatorIndex = int(r.u32());
    e.handlerName = r.str();
    e.operandCount = int(r.u32());
    e.branchKind = BranchKind(r.u8());
    bool hasDelta = r.u8() != 0;
    int64_t delta = r.i64();
    if (hasDelta) e.stackDelta = int(delta);
    e.isMapped = r.u8() != 0;
    e.branch = r.u8() != 0;
    e.isBranchTrue = r.u8() != 0;
    e.isBranchFalse = r.u8() != 0;
    e.hasSend = r.u8() != 0;
    bool hasFrame = r.u8() != 0;
    int64_t frameDelta = r.i64();
    if (hasFrame) e.needsFrameNever = int(frameDelta);
  }
  uint32_t primCount = r.u32();
  for (uint32_t i = 0; i < primCount; i++) {
    uint32_t primId = r.u32();
    uint32_t idx = r.u32();
    table.primitiveGenerators[int(primId)] = int(idx);
  }
  return table;
}

}  // namespace druidlet
