#include "druidlet/druid_ir.hpp"

#include <algorithm>
#include <sstream>

namespace druidlet {

const char* irOpName(IrOp op) {
  switch (op) {
    case IrOp::Constant: return "const";
    case IrOp::StageSource: return "stageSource";
    case IrOp::Copy: return "copy";
    case IrOp::StageHint: return "stageHint";
    case IrOp::Add: return "add";
    case IrOp::Sub: return "sub";
    case IrOp::Mul: return "mul";
    case IrOp::BitAnd: return "bitAnd";
    case IrOp::ShiftLeft: return "shl";
    case IrOp::ShiftRight: return "shr";
    case IrOp::Compare: return "cmp";
    case IrOp::LoadReceiver: return "receiver";
    case IrOp::LoadArg: return "arg";
    case IrOp::LoadSlot: return "loadSlot";
    case IrOp::LoadNumSlots: return "numSlots";
    case IrOp::LoadClassId: return "classId";
    case IrOp::StoreSlot: return "storeSlot";
    case IrOp::StackRead: return "stackRead";
    case IrOp::StackPush: return "stackPush";
    case IrOp::StackPop: return "stackPop";
    case IrOp::LoadTemp: return "loadTemp";
    case IrOp::StoreTemp: return "storeTemp";
    case IrOp::Send: return "send";
    case IrOp::RuntimeCall: return "runtimeCall";
    case IrOp::Phi: return "phi";
    case IrOp::Jump: return "jump";
    case IrOp::Branch: return "branch";
    case IrOp::CheckedAdd: return "checkedAdd";
    case IrOp::CheckedSub: return "checkedSub";
    case IrOp::CheckedMul: return "checkedMul";
    case IrOp::JumpToBytecode: return "jumpBc";
    case IrOp::Return: return "return";
    case IrOp::PrimFail: return "primFail";
    case IrOp::DeoptPoint: return "deopt";
    case IrOp::EndHandler: return "endHandler";
  }
  return "?";
}

const char* irCondName(IrCond c) {
  switch (c) {
    case IrCond::Eq: return "eq";
    case IrCond::Ne: return "ne";
    case IrCond::Lt: return "lt";
    case IrCond::Le: return "le";
    case IrCond::Gt: return "gt";
    case IrCond::Ge: return "ge";
    case IrCond::TestMaskNonZero: return "testMask";
  }
  return "?";
}

const char* stageKindName(StageKind k) {
  switch (k) {
    case StageKind::BytecodePc: return "bytecodePC";
    case StageKind::Byte1: return "byte1";
    case StageKind::Byte2: return "byte2";
    case StageKind::NilObject: return "nilObject";
    case StageKind::TrueObject: return "trueObject";
    case StageKind::FalseObject: return "falseObject";
    case StageKind::Method: return "method";
  }
  return "?";
}

const char* runtimeHookName(RuntimeHook h) {
  switch (h) {
    case RuntimeHook::MustBeBoolean: return "mustBeBoolean";
    case RuntimeHook::AllocArray: return "allocArray";
  }
  return "?";
}

bool irOpIsTerminator(IrOp op) {
  switch (op) {
    case IrOp::Jump: case IrOp::Branch: case IrOp::CheckedAdd: case IrOp::CheckedSub:
    case IrOp::CheckedMul: case IrOp::JumpToBytecode: case IrOp::Return:
    case IrOp::PrimFail: case IrOp::DeoptPoint: case IrOp::EndHandler:
      return true;
    default:
      return false;
  }
}

bool irOpIsPure(IrOp op) {
  switch (op) {
    case IrOp::Constant: case IrOp::StageSource: case IrOp::Copy: case IrOp::StageHint:
    case IrOp::Add: case IrOp::Sub: case IrOp::Mul: case IrOp::BitAnd:
    case IrOp::ShiftLeft: case IrOp::ShiftRight: case IrOp::Compare:
    case IrOp::LoadReceiver: case IrOp::LoadArg: case IrOp::LoadNumSlots:
    case IrOp::LoadClassId: case IrOp::Phi:
      return true;
    // loads are removable when unused but not freely reorderable across
    // stores; the passes treat them separately
    case IrOp::LoadSlot: case IrOp::StackRead: case IrOp::LoadTemp:
      return true;
    default:
      return false;
  }
}

bool irOpIsChecked(IrOp op) {
  return op == IrOp::CheckedAdd || op == IrOp::CheckedSub || op == IrOp::CheckedMul;
}

int Ir::addBlock() {
  blocks.push_back(IrBlock{});
  return int(blocks.size()) - 1;
}

int Ir::append(int block, IrInstr instr) {
  instr.block = block;
  instrs.push_back(std::move(instr));
  int id = int(instrs.size()) - 1;
  blocks[size_t(block)].instrs.push_back(id);
  return id;
}

int Ir::terminatorOf(int block) const {
  const IrBlock& b = blocks[size_t(block)];
  for (auto it = b.instrs.rbegin(); it != b.instrs.rend(); ++it)
    if (!instrs[size_t(*it)].dead) return *it;
  return -1;
}

std::vector<std::vector<int>> Ir::computeUses() const {
  std::vector<std::vector<int>> uses(instrs.size());
  for (size_t i = 0; i < instrs.size(); i++) {
    if (instrs[i].dead) continue;
    for (int a : instrs[i].args) uses[size_t(a)].push_back(int(i));
  }
  return uses;
}

std::vector<int> Ir::reversePostorder() const {
  std::vector<int> order;
  std::vector<int> state(blocks.size(), 0);
  std::vector<int> stack{entry};
  // iterative postorder
  std::vector<std::pair<int, size_t>> frames;
  frames.emplace_back(entry, 0);
  state[size_t(entry)] = 1;
  while (!frames.empty()) {
    auto& [b, i] = frames.back();
    const auto& succs = blocks[size_t(b)].succs;
    if (i < succs.size()) {
      int s = succs[i++];
      if (state[size_t(s)] == 0) {
        state[size_t(s)] = 1;
        frames.emplace_back(s, 0);
      }
    } else {
      order.push_back(b);
      frames.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

std::vector<int> Ir::dominators() const {
  // Cooper-Harvey-Kennedy iterative dominators over reverse postorder.
  std::vector<int> rpo = reversePostorder();
  std::vector<int> rpoIndex(blocks.size(), -1);
  for (size_t i = 0; i < rpo.size(); i++) rpoIndex[size_t(rpo[i])] = int(i);
  std::vector<int> idom(blocks.size(), -1);
  idom[size_t(entry)] = entry;
  auto intersect = [&](int a, int b) {
    while (a != b) {
      while (rpoIndex[size_t(a)] > rpoIndex[size_t(b)]) a = idom[size_t(a)];
      while (rpoIndex[size_t(b)] > rpoIndex[size_t(a)]) b = idom[size_t(b)];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int b : rpo) {
      if (b == entry) continue;
      int newIdom = -1;
      for (int p : blocks[size_t(b)].preds) {
        if (rpoIndex[size_t(p)] < 0 || idom[size_t(p)] < 0) continue;
        newIdom = newIdom < 0 ? p : intersect(p, newIdom);
      }
      if (newIdom >= 0 && idom[size_t(b)] != newIdom) {
        idom[size_t(b)] = newIdom;
        changed = true;
      }
    }
  }
  return idom;
}

bool Ir::dominates(const std::vector<int>& idom, int a, int b) const {
  while (true) {
    if (a == b) return true;
    if (b == entry || idom[size_t(b)] < 0) return false;
    int next = idom[size_t(b)];
    if (next == b) return false;
    b = next;
  }
}

int Ir::liveInstructionCount() const {
  int n = 0;
  for (auto& i : instrs)
    if (!i.dead && !blocks[size_t(i.block)].dead) n++;
  return n;
}

int Ir::liveBlockCount() const {
  int n = 0;
  for (auto& b : blocks)
    if (!b.dead) n++;
  return n;
}

std::vector<std::string> checkSsa(const Ir& ir) {
  std::vector<std::string> problems;
  auto complain = [&](const std::string& msg) { problems.push_back(msg); };

  // edge consistency
  for (size_t b = 0; b < ir.blocks.size(); b++) {
    if (ir.blocks[b].dead) continue;
    for (int s : ir.blocks[b].succs) {
      const auto& preds = ir.blocks[size_t(s)].preds;
      if (std::count(preds.begin(), preds.end(), int(b)) != 1)
        complain("edge " + std::to_string(b) + "->" + std::to_string(s) +
                 " not mirrored in preds");
      if (ir.blocks[size_t(s)].dead)
        complain("live block " + std::to_string(b) + " targets dead block");
    }
    for (int p : ir.blocks[b].preds) {
      const auto& succs = ir.blocks[size_t(p)].succs;
      if (std::count(succs.begin(), succs.end(), int(b)) < 1)
        complain("pred edge " + std::to_string(p) + "->" + std::to_string(b) +
                 " not mirrored in succs");
    }
  }

  // one terminator per live block, phis first
  for (size_t b = 0; b < ir.blocks.size(); b++) {
    if (ir.blocks[b].dead) continue;
    int terminators = 0;
    bool sawNonPhi = false;
    int liveCount = 0;
    for (int id : ir.blocks[b].instrs) {
      const IrInstr& ins = ir.instrs[size_t(id)];
      if (ins.dead) continue;
      liveCount++;
      if (ins.op == IrOp::Phi) {
        if (sawNonPhi) complain("phi after non-phi in block " + std::to_string(b));
        if (ins.args.size() != ir.blocks[b].preds.size())
          complain("phi arity mismatch in block " + std::to_string(b));
      } else {
        sawNonPhi = true;
      }
      if (irOpIsTerminator(ins.op)) {
        terminators++;
        if (id != ir.terminatorOf(int(b)))
          complain("terminator not last in block " + std::to_string(b));
        size_t expected = ins.op == IrOp::Branch || irOpIsChecked(ins.op) ? 2
                          : ins.op == IrOp::Jump                          ? 1
                                                                          : 0;
        if (ir.blocks[b].succs.size() != expected)
          complain("successor count mismatch in block " + std::to_string(b));
      }
    }
    if (liveCount == 0) {
      complain("live block " + std::to_string(b) + " is empty");
    } else if (terminators != 1) {
      complain("block " + std::to_string(b) + " has " + std::to_string(terminators) +
               " terminators");
    }
  }

  // defs dominate uses; operands are live
  std::vector<int> idom = ir.dominators();
  std::vector<int> posInBlock(ir.instrs.size(), -1);
  for (size_t b = 0; b < ir.blocks.size(); b++) {
    int pos = 0;
    for (int id : ir.blocks[b].instrs) posInBlock[size_t(id)] = pos++;
  }
  for (size_t i = 0; i < ir.instrs.size(); i++) {
    const IrInstr& ins = ir.instrs[i];
    if (ins.dead || ir.blocks[size_t(ins.block)].dead) continue;
    for (size_t a = 0; a < ins.args.size(); a++) {
      int def = ins.args[a];
      if (def < 0 || def >= int(ir.instrs.size())) {
        complain("instr " + std::to_string(i) + " has a bad operand id");
        continue;
      }
      const IrInstr& defIns = ir.instrs[size_t(def)];
      if (defIns.dead || ir.blocks[size_t(defIns.block)].dead) {
        complain("instr " + std::to_string(i) + " uses dead value " + std::to_string(def));
        continue;
      }
      if (ins.op == IrOp::Phi) {
        int pred = ir.blocks[size_t(ins.block)].preds[a];
        if (!ir.dominates(idom, defIns.block, pred))
          complain("phi operand " + std::to_string(def) + " does not dominate pred edge");
      } else if (defIns.block == ins.block) {
        if (posInBlock[size_t(def)] >= posInBlock[i] && !irOpIsChecked(defIns.op))
          complain("instr " + std::to_string(i) + " uses later value " + std::to_string(def));
      } else if (!ir.dominates(idom, defIns.block, ins.block)) {
        complain("instr " + std::to_string(i) + " not dominated by def " + std::to_string(def));
      }
    }
  }
  return problems;
}

std::string printIr(const Ir& ir) {
  std::ostringstream out;
  out << (ir.kind == HandlerKind::Bytecode ? "bytecode " : "primitive ") << ir.name << "\n";
  for (size_t b = 0; b < ir.blocks.size(); b++) {
    if (ir.blocks[b].dead) continue;
    out << "b" << b;
    if (int(b) == ir.entry) out << " (entry)";
    if (!ir.blocks[b].preds.empty()) {
      out << "  preds:";
      for (int p : ir.blocks[b].preds) out << " b" << p;
    }
    out << "\n";
    for (int id : ir.blocks[b].instrs) {
      const IrInstr& ins = ir.instrs[size_t(id)];
      if (ins.dead) continue;
      out << "  v" << id << " = " << irOpName(ins.op);
      if (ins.op == IrOp::Constant) out << " " << ins.imm;
      if (ins.op == IrOp::StageSource) out << " " << stageKindName(ins.stage);
      if (ins.op == IrOp::Compare) out << " " << irCondName(ins.cond);
      if (ins.op == IrOp::RuntimeCall) out << " " << runtimeHookName(ins.hook);
      if (ins.op == IrOp::StackRead || ins.op == IrOp::StackPop ||
          ins.op == IrOp::LoadArg || ins.op == IrOp::Send)
        out << " #" << ins.imm;
      for (int a : ins.args) out << " v" << a;
      if (!ir.blocks[b].succs.empty() && id == ir.terminatorOf(int(b))) {
        out << " ->";
        for (int s : ir.blocks[b].succs) out << " b" << s;
      }
      out << "\n";
    }
  }
  return out.str();
}

}  // namespace druidlet
