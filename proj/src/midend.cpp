#include "druidlet/midend.hpp"

#include <algorithm>

#include "druidlet/object_model.hpp"
#include "druidlet/opcodes.hpp"

namespace druidlet {

namespace {

bool isLive(const Ir& ir, int id) {
  const IrInstr& i = ir.instr(id);
  return !i.dead && !ir.blocks[size_t(i.block)].dead;
}

int64_t wrap(IrOp op, int64_t a, int64_t b) {
  switch (op) {
    case IrOp::Add: return int64_t(uint64_t(a) + uint64_t(b));
    case IrOp::Sub: return int64_t(uint64_t(a) - uint64_t(b));
    case IrOp::Mul: return int64_t(uint64_t(a) * uint64_t(b));
    case IrOp::BitAnd: return a & b;
    case IrOp::ShiftLeft: return int64_t(uint64_t(a) << (b & 63));
    case IrOp::ShiftRight: return a >> (b & 63);
    default: return 0;
  }
}

bool evalCompare(IrCond c, int64_t a, int64_t b) {
  switch (c) {
    case IrCond::Eq: return a == b;
    case IrCond::Ne: return a != b;
    case IrCond::Lt: return a < b;
    case IrCond::Le: return a <= b;
    case IrCond::Gt: return a > b;
    case IrCond::Ge: return a >= b;
    case IrCond::TestMaskNonZero: return (a & b) != 0;
  }
  return false;
}

void makeConstant(IrInstr& i, int64_t v) {
  i.op = IrOp::Constant;
  i.imm = v;
  i.args.clear();
}

void makeCopy(IrInstr& i, int v) {
  i.op = IrOp::Copy;
  i.imm = 0;
  i.args = {v};
}

// Removes one edge from->to, dropping the matching phi argument in `to`.
void removeEdge(Ir& ir, int from, int to) {
  IrBlock& target = ir.blocks[size_t(to)];
  int predIndex = -1;
  for (size_t i = 0; i < target.preds.size(); i++)
    if (target.preds[i] == from) {
      predIndex = int(i);
      break;
    }
  if (predIndex < 0) return;
  target.preds.erase(target.preds.begin() + predIndex);
  for (int id : target.instrs) {
    IrInstr& ins = ir.instr(id);
    if (ins.dead || ins.op != IrOp::Phi) continue;
    if (predIndex < int(ins.args.size()))
      ins.args.erase(ins.args.begin() + predIndex);
  }
  IrBlock& source = ir.blocks[size_t(from)];
  auto it = std::find(source.succs.begin(), source.succs.end(), to);
  if (it != source.succs.end()) source.succs.erase(it);
}

// Replaces a two-successor terminator with a jump to `kept`.
void collapseToJump(Ir& ir, int block, int kept, int dropped) {
  IrInstr& term = ir.instr(ir.terminatorOf(block));
  term.op = IrOp::Jump;
  term.args.clear();
  if (dropped != kept) removeEdge(ir, block, dropped);
  ir.blocks[size_t(block)].succs = {kept};
}

}  // namespace

bool foldConstants(Ir& ir) {
  bool changed = false;
  auto constOf = [&](int id, int64_t& out) {
    const IrInstr& i = ir.instr(id);
    if (i.op != IrOp::Constant) return false;
    out = i.imm;
    return true;
  };

  for (size_t b = 0; b < ir.blocks.size(); b++) {
    if (ir.blocks[b].dead) continue;
    // snapshot: folding may insert constants and jump terminators
    std::vector<int> ids = ir.blocks[b].instrs;
    for (int id : ids) {
      IrInstr& i = ir.instr(id);
      if (i.dead) continue;
      switch (i.op) {
        case IrOp::Add: case IrOp::Sub: case IrOp::Mul: case IrOp::BitAnd:
        case IrOp::ShiftLeft: case IrOp::ShiftRight: {
          int64_t ca, cb;
          bool la = constOf(i.args[0], ca), lb = constOf(i.args[1], cb);
          if (la && lb) {
            makeConstant(i, wrap(i.op, ca, cb));
            changed = true;
            break;
          }
          // normalize constants to the right for the associative rules
          if (la && !lb && (i.op == IrOp::Add || i.op == IrOp::Mul || i.op == IrOp::BitAnd)) {
            std::swap(i.args[0], i.args[1]);
            std::swap(la, lb);
            std::swap(ca, cb);
            changed = true;
          }
          if (lb) {
            if ((i.op == IrOp::Add || i.op == IrOp::Sub) && cb == 0) {
              makeCopy(i, i.args[0]);
              changed = true;
              break;
            }
            if (i.op == IrOp::Mul && cb == 1) {
              makeCopy(i, i.args[0]);
              changed = true;
              break;
            }
            if (i.op == IrOp::Mul && cb == 0) {
              makeConstant(i, 0);
              changed = true;
              break;
            }
            if (i.op == IrOp::BitAnd && cb == -1) {
              makeCopy(i, i.args[0]);
              changed = true;
              break;
            }
            if (i.op == IrOp::BitAnd && cb == 0) {
              makeConstant(i, 0);
              changed = true;
              break;
            }
            if ((i.op == IrOp::ShiftLeft || i.op == IrOp::ShiftRight) && cb == 0) {
              makeCopy(i, i.args[0]);
              changed = true;
              break;
            }
            // (x + c1) + c2 -> x + (c1 + c2)
            if (i.op == IrOp::Add) {
              const IrInstr& lhs = ir.instr(i.args[0]);
              int64_t c1;
              if (lhs.op == IrOp::Add && !lhs.dead && constOf(lhs.args[1], c1)) {
                i.args[0] = lhs.args[0];
                // reuse the rhs constant slot with the combined value
                IrInstr combined;
                combined.op = IrOp::Constant;
                combined.imm = int64_t(uint64_t(c1) + uint64_t(cb));
                combined.block = i.block;
                ir.instrs.push_back(combined);
                int cid = int(ir.instrs.size()) - 1;
                // insert before the use to keep in-block ordering valid
                auto& list = ir.blocks[b].instrs;
                auto pos = std::find(list.begin(), list.end(), id);
                list.insert(pos, cid);
                i.args[1] = cid;
                changed = true;
              }
            }
          }
          break;
        }
        case IrOp::Compare: {
          int64_t ca, cb;
          if (constOf(i.args[0], ca) && constOf(i.args[1], cb)) {
            makeConstant(i, evalCompare(i.cond, ca, cb) ? 1 : 0);
            changed = true;
          }
          break;
        }
        case IrOp::CheckedAdd: case IrOp::CheckedSub: case IrOp::CheckedMul: {
          int64_t ca, cb;
          if (!constOf(i.args[0], ca) || !constOf(i.args[1], cb)) break;
          int64_t pa = ca >> 1, pb = cb >> 1, r = 0;
          bool overflow = false;
          if (i.op == IrOp::CheckedAdd) overflow = __builtin_add_overflow(pa, pb, &r);
          else if (i.op == IrOp::CheckedSub) overflow = __builtin_sub_overflow(pa, pb, &r);
          else overflow = __builtin_mul_overflow(pa, pb, &r);
          overflow = overflow || r < kSmallIntMin || r > kSmallIntMax;
          int okSucc = ir.blocks[b].succs[0];
          int ovfSucc = ir.blocks[b].succs[1];
          if (!overflow) {
            makeConstant(i, int64_t(uint64_t(r) << 1 | 1));
            // the constant is no longer a terminator: append a jump
            IrInstr j;
            j.op = IrOp::Jump;
            j.block = int(b);
            ir.instrs.push_back(j);
            ir.blocks[b].instrs.push_back(int(ir.instrs.size()) - 1);
            removeEdge(ir, int(b), ovfSucc);
            ir.blocks[b].succs = {okSucc};
          } else {
            // provable overflow: the ok edge dies, the value is unused
            makeConstant(i, 1);
            IrInstr j;
            j.op = IrOp::Jump;
            j.block = int(b);
            ir.instrs.push_back(j);
            ir.blocks[b].instrs.push_back(int(ir.instrs.size()) - 1);
            removeEdge(ir, int(b), okSucc);
            ir.blocks[b].succs = {ovfSucc};
          }
          changed = true;
          break;
        }
        default:
          break;
      }
    }
  }
  return changed;
}

bool copyPropagate(Ir& ir) {
  bool changed = false;
  // resolve copy chains
  std::vector<int> target(ir.instrs.size());
  for (size_t i = 0; i < ir.instrs.size(); i++) target[i] = int(i);
  auto resolve = [&](int id) {
    int v = id;
    while (true) {
      const IrInstr& ins = ir.instr(v);
      if (ins.op == IrOp::Copy && !ins.dead) v = ins.args[0];
      else break;
    }
    return v;
  };
  // trivial phis: all operands identical (possibly through copies or self)
  for (size_t b = 0; b < ir.blocks.size(); b++) {
    if (ir.blocks[b].dead) continue;
    for (int id : ir.blocks[b].instrs) {
      IrInstr& i = ir.instr(id);
      if (i.dead || i.op != IrOp::Phi) continue;
      int unique = -1;
      bool trivial = true;
      for (int a : i.args) {
        int v = resolve(a);
        if (v == id) continue;
        if (unique < 0) unique = v;
        else if (unique != v) trivial = false;
      }
      if (trivial && unique >= 0) {
        makeCopy(i, unique);
        changed = true;
      }
    }
  }
  for (auto& i : ir.instrs) {
    if (i.dead || i.op == IrOp::Copy) continue;
    for (auto& a : i.args) {
      int v = resolve(a);
      if (v != a) {
        a = v;
        changed = true;
      }
    }
  }
  return changed;
}

bool globalValueNumbering(Ir& ir) {
  bool changed = false;
  std::vector<int> idom = ir.dominators();
  std::vector<int> rpo = ir.reversePostorder();
  std::vector<int> posInBlock(ir.instrs.size(), 0);
  for (auto& b : ir.blocks) {
    int pos = 0;
    for (int id : b.instrs) posInBlock[size_t(id)] = pos++;
  }
  auto numberable = [&](const IrInstr& i) {
    switch (i.op) {
      case IrOp::Constant: case IrOp::StageSource: case IrOp::Add: case IrOp::Sub:
      case IrOp::Mul: case IrOp::BitAnd: case IrOp::ShiftLeft: case IrOp::ShiftRight:
      case IrOp::Compare: case IrOp::LoadReceiver: case IrOp::LoadArg:
      case IrOp::LoadNumSlots: case IrOp::LoadClassId:
        return true;  // loads from the mutable heap/stack are never numbered
      default:
        return false;
    }
  };
  struct Key {
    IrOp op;
    IrCond cond;
    StageKind stage;
    int64_t imm;
    std::vector<int> args;
    bool operator<(const Key& o) const {
      if (op != o.op) return op < o.op;
      if (cond != o.cond) return cond < o.cond;
      if (stage != o.stage) return stage < o.stage;
      if (imm != o.imm) return imm < o.imm;
      return args < o.args;
    }
  };
  std::map<Key, std::vector<int>> table;
  for (int b : rpo) {
    for (int id : ir.blocks[size_t(b)].instrs) {
      IrInstr& i = ir.instr(id);
      if (i.dead || !numberable(i)) continue;
      Key key{i.op, i.cond, i.stage, i.imm, i.args};
      auto& candidates = table[key];
      int found = -1;
      for (int c : candidates) {
        const IrInstr& prev = ir.instr(c);
        if (prev.dead) continue;
        if (prev.block == i.block) {
          if (posInBlock[size_t(c)] < posInBlock[size_t(id)]) found = c;
        } else if (ir.dominates(idom, prev.block, i.block)) {
          found = c;
        }
        if (found >= 0) break;
      }
      if (found >= 0) {
        makeCopy(i, found);
        changed = true;
      } else {
        candidates.push_back(id);
      }
    }
  }
  return changed;
}

bool simplifyBranches(Ir& ir) {
  bool changed = false;
  for (size_t b = 0; b < ir.blocks.size(); b++) {
    if (ir.blocks[b].dead) continue;
    int termId = ir.terminatorOf(int(b));
    if (termId < 0) continue;
    IrInstr& term = ir.instr(termId);
    if (term.op != IrOp::Branch) continue;
    const IrInstr& cond = ir.instr(term.args[0]);
    if (cond.op == IrOp::Constant) {
      int kept = ir.blocks[b].succs[cond.imm != 0 ? 0 : 1];
      int dropped = ir.blocks[b].succs[cond.imm != 0 ? 1 : 0];
      term.args.clear();
      collapseToJump(ir, int(b), kept, dropped);
      changed = true;
    } else if (ir.blocks[b].succs[0] == ir.blocks[b].succs[1]) {
      int succ = ir.blocks[b].succs[0];
      term.args.clear();
      collapseToJump(ir, int(b), succ, succ);
      // drop the duplicated pred entry and phi args
      removeEdge(ir, int(b), succ);
      changed = true;
    }
  }
  return changed;
}

bool eliminateDeadCode(Ir& ir) {
  bool changed = false;
  // unreachable blocks
  std::vector<bool> reachable(ir.blocks.size(), false);
  std::vector<int> work{ir.entry};
  reachable[size_t(ir.entry)] = true;
  while (!work.empty()) {
    int b = work.back();
    work.pop_back();
    for (int s : ir.blocks[size_t(b)].succs)
      if (!reachable[size_t(s)]) {
        reachable[size_t(s)] = true;
        work.push_back(s);
      }
  }
  for (size_t b = 0; b < ir.blocks.size(); b++) {
    if (ir.blocks[b].dead || reachable[b]) continue;
    // detach edges into still-reachable blocks (prunes their phis)
    std::vector<int> succs = ir.blocks[b].succs;
    for (int s : succs)
      if (reachable[size_t(s)]) removeEdge(ir, int(b), s);
    ir.blocks[b].dead = true;
    for (int id : ir.blocks[b].instrs) ir.instr(id).dead = true;
    changed = true;
  }

  // unused pure instructions
  std::vector<int> useCount(ir.instrs.size(), 0);
  for (size_t i = 0; i < ir.instrs.size(); i++) {
    if (!isLive(ir, int(i))) continue;
    for (int a : ir.instrs[i].args) useCount[size_t(a)]++;
  }
  std::vector<int> worklist;
  for (size_t i = 0; i < ir.instrs.size(); i++) worklist.push_back(int(i));
  while (!worklist.empty()) {
    int id = worklist.back();
    worklist.pop_back();
    if (!isLive(ir, id)) continue;
    IrInstr& ins = ir.instr(id);
    if (!irOpIsPure(ins.op) || irOpIsTerminator(ins.op)) continue;
    if (useCount[size_t(id)] > 0) continue;
    ins.dead = true;
    changed = true;
    for (int a : ins.args) {
      if (--useCount[size_t(a)] == 0) worklist.push_back(a);
    }
    ins.args.clear();
  }
  return changed;
}

PipelineResult runPipeline(Ir& ir, const PipelineOptions& options) {
  PipelineResult result;
  for (int round = 0; round < options.maxRounds; round++) {
    bool changed = false;
    result.rounds = round + 1;
    for (auto& pass : options.order) {
      bool c = false;
      if (pass == "fold") c = foldConstants(ir);
      else if (pass == "copyprop") c = copyPropagate(ir);
      else if (pass == "gvn") c = globalValueNumbering(ir);
      else if (pass == "branch-simplify") c = simplifyBranches(ir);
      else if (pass == "dce") c = eliminateDeadCode(ir);
      else result.ssaProblems.push_back("unknown pass: " + pass);
      result.trace.push_back({pass, ir.liveInstructionCount(), c});
      if (options.checkSsaAfterEachPass) {
        auto problems = checkSsa(ir);
        for (auto& p : problems)
          result.ssaProblems.push_back(pass + ": " + p);
        if (!problems.empty()) return result;
      }
      changed |= c;
    }
    if (!changed) {
      result.fixpoint = true;
      return result;
    }
  }
  result.fixpoint = false;  // no fixpoint within the round budget: a bug
  return result;
}

// ---------------------------------------------------------------------------
// Mock evaluation

MockState::MockState() {
  heap[int64_t(kNilRef)] = {kClassUndefinedObject, {}};
  heap[int64_t(kFalseRef)] = {kClassFalse, {}};
  heap[int64_t(kTrueRef)] = {kClassTrue, {}};
  methodRef = 512;
  methodSlots.assign(kLiteralStart, 0);
}

int64_t MockState::allocate(uint32_t classId, int slots) {
  int64_t ref = nextRef;
  nextRef += 8 * (slots + 1);
  heap[ref] = {classId, std::vector<int64_t>(size_t(slots), int64_t(kNilRef))};
  return ref;
}

namespace {

struct MockStop {
  EvalOutcome outcome;
};

struct MockMachine {
  MockState& st;
  std::vector<EvalEffect>& effects;

  void push(int64_t v) {
    st.stack.push_back(v);
    effects.push_back({EvalEffect::Kind::Push, v});
  }
  void pop(int64_t n) {
    if (int64_t(st.stack.size()) < n)
      throw MockStop{{EvalOutcome::Kind::Error, 0, "stack underflow"}};
    st.stack.resize(st.stack.size() - size_t(n));
    effects.push_back({EvalEffect::Kind::Pop, n});
  }
  int64_t read(int64_t depth) {
    if (depth < 0 || depth >= int64_t(st.stack.size()))
      throw MockStop{{EvalOutcome::Kind::Error, 0, "stack read out of range"}};
    return st.stack[st.stack.size() - 1 - size_t(depth)];
  }
  MockObject& object(int64_t ref) {
    auto it = st.heap.find(ref);
    if (it == st.heap.end())
      throw MockStop{{EvalOutcome::Kind::Error, 0, "bad object reference"}};
    return it->second;
  }
  int64_t loadSlot(int64_t ref, int64_t idx) {
    if (ref == st.methodRef) {
      if (idx < 0 || idx >= int64_t(st.methodSlots.size()))
        throw MockStop{{EvalOutcome::Kind::Error, 0, "method slot out of range"}};
      return st.methodSlots[size_t(idx)];
    }
    MockObject& o = object(ref);
    if (idx < 0 || idx >= int64_t(o.slots.size()))
      throw MockStop{{EvalOutcome::Kind::Error, 0, "slot index out of range"}};
    return o.slots[size_t(idx)];
  }
  void storeSlot(int64_t ref, int64_t idx, int64_t v) {
    MockObject& o = object(ref);
    if (idx < 0 || idx >= int64_t(o.slots.size()))
      throw MockStop{{EvalOutcome::Kind::Error, 0, "slot index out of range"}};
    o.slots[size_t(idx)] = v;
    effects.push_back({EvalEffect::Kind::StoreSlot, ref, idx, v});
  }
  int64_t tempAt(int64_t i) {
    if (i < 0 || i >= int64_t(st.temps.size()))
      throw MockStop{{EvalOutcome::Kind::Error, 0, "temp out of range"}};
    return st.temps[size_t(i)];
  }
  void tempPut(int64_t i, int64_t v) {
    if (i < 0 || i >= int64_t(st.temps.size()))
      throw MockStop{{EvalOutcome::Kind::Error, 0, "temp out of range"}};
    st.temps[size_t(i)] = v;
    effects.push_back({EvalEffect::Kind::StoreTemp, i, v});
  }
  int64_t doSend(int64_t selector, int64_t argc) {
    pop(argc + 1);
    if (st.sendResults.empty())
      throw MockStop{{EvalOutcome::Kind::Error, 0, "no scripted send result"}};
    int64_t result = st.sendResults.front();
    st.sendResults.pop_front();
    effects.push_back({EvalEffect::Kind::Send, selector, argc});
    push(result);
    return result;
  }
  int64_t alloc(int64_t n) {
    if (n < 0 || n > 4096)
      throw MockStop{{EvalOutcome::Kind::Error, 0, "bad mock allocation"}};
    int64_t ref = st.allocate(kClassArray, int(n));
    effects.push_back({EvalEffect::Kind::Alloc, n, ref});
    return ref;
  }
};

}  // namespace

EvalResult irEval(const Ir& ir, const MockState& initial) {
  EvalResult result;
  result.finalState = initial;
  MockState& st = result.finalState;
  MockMachine m{st, result.effects};
  std::vector<int64_t> values(ir.instrs.size(), 0);

  int block = ir.entry;
  int prevBlock = -1;
  int steps = 0;
  try {
    while (true) {
      if (++steps > 200000)
        throw MockStop{{EvalOutcome::Kind::Error, 0, "evaluation step budget exceeded"}};
      const IrBlock& b = ir.blocks[size_t(block)];
      if (b.dead) throw MockStop{{EvalOutcome::Kind::Error, 0, "entered a dead block"}};

      // phis read their inputs simultaneously on entry
      std::vector<std::pair<int, int64_t>> phiValues;
      for (int id : b.instrs) {
        const IrInstr& ins = ir.instr(id);
        if (ins.dead || ins.op != IrOp::Phi) continue;
        int predIndex = -1;
        for (size_t p = 0; p < b.preds.size(); p++)
          if (b.preds[p] == prevBlock) predIndex = int(p);
        if (predIndex < 0 || predIndex >= int(ins.args.size()))
          throw MockStop{{EvalOutcome::Kind::Error, 0, "phi without a matching edge"}};
        phiValues.emplace_back(id, values[size_t(ins.args[size_t(predIndex)])]);
      }
      for (auto& [id, v] : phiValues) values[size_t(id)] = v;

      int next = -1;
      for (int id : b.instrs) {
        const IrInstr& ins = ir.instr(id);
        if (ins.dead || ins.op == IrOp::Phi) continue;
        auto arg = [&](int k) { return values[size_t(ins.args[size_t(k)])]; };
        switch (ins.op) {
          case IrOp::Constant: values[size_t(id)] = ins.imm; break;
          case IrOp::StageSource:
            switch (ins.stage) {
              case StageKind::BytecodePc: values[size_t(id)] = st.bytecodePc; break;
              case StageKind::Byte1: values[size_t(id)] = st.operandBytes[0]; break;
              case StageKind::Byte2: values[size_t(id)] = st.operandBytes[1]; break;
              case StageKind::NilObject: values[size_t(id)] = int64_t(kNilRef); break;
              case StageKind::TrueObject: values[size_t(id)] = int64_t(kTrueRef); break;
              case StageKind::FalseObject: values[size_t(id)] = int64_t(kFalseRef); break;
              case StageKind::Method: values[size_t(id)] = st.methodRef; break;
            }
            break;
          case IrOp::Copy: case IrOp::StageHint: values[size_t(id)] = arg(0); break;
          case IrOp::Add: case IrOp::Sub: case IrOp::Mul: case IrOp::BitAnd:
          case IrOp::ShiftLeft: case IrOp::ShiftRight:
            values[size_t(id)] = wrap(ins.op, arg(0), arg(1));
            break;
          case IrOp::Compare:
            values[size_t(id)] = evalCompare(ins.cond, arg(0), arg(1)) ? 1 : 0;
            break;
          case IrOp::LoadReceiver: values[size_t(id)] = st.receiver; break;
          case IrOp::LoadArg:
            if (ins.imm < 0 || ins.imm >= int64_t(st.args.size()))
              throw MockStop{{EvalOutcome::Kind::Error, 0, "argument out of range"}};
            values[size_t(id)] = st.args[size_t(ins.imm)];
            break;
          case IrOp::LoadSlot: values[size_t(id)] = m.loadSlot(arg(0), arg(1)); break;
          case IrOp::LoadNumSlots:
            values[size_t(id)] = int64_t(m.object(arg(0)).slots.size());
            break;
          case IrOp::LoadClassId:
            values[size_t(id)] = (arg(0) & 1) ? kClassSmallInteger : m.object(arg(0)).classId;
            break;
          case IrOp::StoreSlot: m.storeSlot(arg(0), arg(1), arg(2)); break;
          case IrOp::StackRead: values[size_t(id)] = m.read(ins.imm); break;
          case IrOp::StackPush: m.push(arg(0)); break;
          case IrOp::StackPop: m.pop(ins.imm); break;
          case IrOp::LoadTemp: values[size_t(id)] = m.tempAt(arg(0)); break;
          case IrOp::StoreTemp: m.tempPut(arg(0), arg(1)); break;
          case IrOp::Send: {
            int64_t argc = ins.imm >= 0 ? ins.imm : values[size_t(ins.args[1])];
            values[size_t(id)] = m.doSend(arg(0), argc);
            break;
          }
          case IrOp::RuntimeCall:
            if (ins.hook == RuntimeHook::MustBeBoolean) {
              result.effects.push_back({EvalEffect::Kind::MustBeBoolean, arg(0)});
              throw MockStop{{EvalOutcome::Kind::Error, 0, "mustBeBoolean"}};
            }
            values[size_t(id)] = m.alloc(arg(0));
            break;
          // terminators
          case IrOp::Jump: next = b.succs[0]; break;
          case IrOp::Branch: next = b.succs[arg(0) != 0 ? 0 : 1]; break;
          case IrOp::CheckedAdd: case IrOp::CheckedSub: case IrOp::CheckedMul: {
            int64_t pa = arg(0) >> 1, pb = arg(1) >> 1, r = 0;
            bool overflow = false;
            if (ins.op == IrOp::CheckedAdd) overflow = __builtin_add_overflow(pa, pb, &r);
            else if (ins.op == IrOp::CheckedSub) overflow = __builtin_sub_overflow(pa, pb, &r);
            else overflow = __builtin_mul_overflow(pa, pb, &r);
            overflow = overflow || r < kSmallIntMin || r > kSmallIntMax;
            values[size_t(id)] = int64_t(uint64_t(r) << 1 | 1);
            next = b.succs[overflow ? 1 : 0];
            break;
          }
          case IrOp::JumpToBytecode:
            result.effects.push_back({EvalEffect::Kind::Jump, arg(0)});
            result.outcome = {EvalOutcome::Kind::JumpTo, arg(0), ""};
            return result;
          case IrOp::Return:
            result.outcome = {EvalOutcome::Kind::Return, arg(0), ""};
            return result;
          case IrOp::PrimFail:
            result.outcome = {EvalOutcome::Kind::PrimFail, 0, ""};
            return result;
          case IrOp::DeoptPoint:
            result.outcome = {EvalOutcome::Kind::Deopt, 0, ""};
            return result;
          case IrOp::EndHandler:
            result.outcome = {EvalOutcome::Kind::EndHandler, 0, ""};
            return result;
          case IrOp::Phi:
            break;
        }
        if (next >= 0) break;
      }
      if (next < 0)
        throw MockStop{{EvalOutcome::Kind::Error, 0, "block without a terminator"}};
      prevBlock = block;
      block = next;
    }
  } catch (const MockStop& stop) {
    result.outcome = stop.outcome;
    return result;
  }
}

namespace {

// Adapts MockState to the handler evaluator's context interface.
struct MockCtx {
  MockState& st;
  std::vector<EvalEffect>& effects;
  MockMachine m;
  bool primitiveMode;
  int numArgs;

  MockCtx(MockState& s, std::vector<EvalEffect>& e, bool prim, int args)
      : st(s), effects(e), m{s, e}, primitiveMode(prim), numArgs(args) {}

  int64_t stackTop() { return stackValue(0); }
  int64_t stackValue(int64_t d) {
    if (primitiveMode) {
      if (d == numArgs) return st.receiver;
      if (d < numArgs) return st.args[size_t(numArgs - 1 - d)];
      throw MockStop{{EvalOutcome::Kind::Error, 0, "stack access out of convention"}};
    }
    return m.read(d);
  }
  void push(int64_t v) { m.push(v); }
  void pop(int64_t n) { m.pop(n); }
  int64_t operandByte(int i) { return st.operandBytes[i & 1]; }
  int64_t currentBytecode() { return st.opcode; }
  int64_t bytecodePC() { return st.bytecodePc; }
  int64_t primFailCode() { return 0; }
  int64_t methodObj() { return st.methodRef; }
  int64_t tempAt(int64_t i) { return m.tempAt(i); }
  void tempAtPut(int64_t i, int64_t v) { m.tempPut(i, v); }
  int64_t receiver() { return st.receiver; }
  int64_t nilObject() { return int64_t(kNilRef); }
  int64_t trueObject() { return int64_t(kTrueRef); }
  int64_t falseObject() { return int64_t(kFalseRef); }
  int64_t fetchPointer(int64_t i, int64_t obj) { return m.loadSlot(obj, i); }
  void storePointer(int64_t i, int64_t obj, int64_t v) { m.storeSlot(obj, i, v); }
  int64_t numSlotsOf(int64_t obj) { return int64_t(m.object(obj).slots.size()); }
  int64_t classIndexOf(int64_t obj) {
    return (obj & 1) ? kClassSmallInteger : m.object(obj).classId;
  }
  int64_t newArrayOf(int64_t n) { return m.alloc(n); }
  void mustBeBoolean(int64_t v) {
    effects.push_back({EvalEffect::Kind::MustBeBoolean, v});
    throw MockStop{{EvalOutcome::Kind::Error, 0, "mustBeBoolean"}};
  }
};

}  // namespace

EvalResult handlerEval(const VMDefinition& vmdef, const HandlerDef& def, uint8_t opcode,
                       const MockState& initial, IgnoreView view) {
  EvalResult result;
  result.finalState = initial;
  MockState& st = result.finalState;
  st.opcode = opcode;
  bool primitive = def.kind == HandlerKind::Primitive;
  MockCtx ctx(st, result.effects, primitive, def.annotations.numberOfArguments.value_or(0));
  HandlerEvaluator<MockCtx> eval(vmdef, ctx, view);
  try {
    HandlerOutcome out = eval.run(def);
    MockMachine m{st, result.effects};
    switch (out.kind) {
      case HandlerOutcome::Kind::FetchNext:
        result.outcome = {EvalOutcome::Kind::EndHandler, 0, ""};
        break;
      case HandlerOutcome::Kind::Jump: {
        int64_t target = st.bytecodePc + 1 + operandByteCount(opcode) + out.a;
        result.effects.push_back({EvalEffect::Kind::Jump, target});
        result.outcome = {EvalOutcome::Kind::JumpTo, target, ""};
        break;
      }
      case HandlerOutcome::Kind::SendSpecial: {
        int64_t selector = vmdef.specialSelectors[size_t(out.a)];
        m.doSend(selector, out.b);
        result.outcome = {EvalOutcome::Kind::EndHandler, 0, ""};
        break;
      }
      case HandlerOutcome::Kind::SendLiteral: {
        int64_t slot = kLiteralStart + out.a;
        if (slot < 0 || slot >= int64_t(st.methodSlots.size()))
          throw MockStop{{EvalOutcome::Kind::Error, 0, "selector literal out of range"}};
        int64_t selector = st.methodSlots[size_t(slot)] >> 1;
        m.doSend(selector, out.b);
        result.outcome = {EvalOutcome::Kind::EndHandler, 0, ""};
        break;
      }
      case HandlerOutcome::Kind::MethodReturn:
        result.outcome = {EvalOutcome::Kind::Return, out.value, ""};
        break;
      case HandlerOutcome::Kind::PrimResult:
        result.outcome = {EvalOutcome::Kind::Return, out.value, ""};
        break;
      case HandlerOutcome::Kind::PrimFail:
        result.outcome = {EvalOutcome::Kind::PrimFail, 0, ""};
        break;
      case HandlerOutcome::Kind::Deopt:
        result.outcome = {EvalOutcome::Kind::Deopt, 0, ""};
        break;
      case HandlerOutcome::Kind::BooleanCheat:
        result.outcome = {EvalOutcome::Kind::Error, out.a, "booleanCheat"};
        break;
      case HandlerOutcome::Kind::HelperReturn:
        result.outcome = {EvalOutcome::Kind::Error, 0, "helper outcome at handler level"};
        break;
    }
  } catch (const MockStop& stop) {
    result.outcome = stop.outcome;
  } catch (const VmError& e) {
    result.outcome = {EvalOutcome::Kind::Error, 0, e.what()};
  }
  return result;
}

bool resultsEquivalent(const EvalResult& handler, const EvalResult& translated,
                       std::string* why) {
  auto explain = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  bool defers = translated.outcome.kind == EvalOutcome::Kind::PrimFail ||
                translated.outcome.kind == EvalOutcome::Kind::Deopt;
  if (defers) {
    for (auto& e : translated.effects)
      if (e.kind == EvalEffect::Kind::Push || e.kind == EvalEffect::Kind::Pop ||
          e.kind == EvalEffect::Kind::StoreSlot || e.kind == EvalEffect::Kind::StoreTemp ||
          e.kind == EvalEffect::Kind::Send || e.kind == EvalEffect::Kind::Alloc)
        return explain("deferring path mutated state first");
    // deferral re-enters the interpreter, which realizes the handler result
    return true;
  }
  if (handler.outcome.kind != translated.outcome.kind)
    return explain("outcome kinds differ");
  if (handler.outcome.kind == EvalOutcome::Kind::Error)
    return true;  // both stopped at a runtime error of the same shape
  if (handler.outcome.value != translated.outcome.value)
    return explain("outcome values differ");
  if (handler.effects != translated.effects) return explain("effect sequences differ");
  if (handler.finalState.stack != translated.finalState.stack)
    return explain("final stacks differ");
  if (handler.finalState.temps != translated.finalState.temps)
    return explain("final temps differ");
  // heap contents: compare the objects both sides know
  if (handler.finalState.heap.size() != translated.finalState.heap.size())
    return explain("heap object counts differ");
  for (auto& [ref, obj] : handler.finalState.heap) {
    auto it = translated.finalState.heap.find(ref);
    if (it == translated.finalState.heap.end() || it->second.classId != obj.classId ||
        it->second.slots != obj.slots)
      return explain("heap contents differ");
  }
  return true;
}

}  // namespace druidlet
