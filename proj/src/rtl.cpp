#include "druidlet/rtl.hpp"

#include <sstream>

namespace druidlet {

const char* regName(uint8_t r) {
  switch (r) {
    case kRegReceiverResult: return "ReceiverResultReg";
    case kRegArg0: return "Arg0Reg";
    case kRegArg1: return "Arg1Reg";
    case kRegTemp: return "TempReg";
    case kRegClass: return "ClassReg";
    case kRegSendNumArgs: return "SendNumArgsReg";
    case kRegSP: return "SPReg";
    case kRegFP: return "FPReg";
    default:
      if (r >= kRegR0 && r < kRegCount) {
        static const char* names[] = {"R0", "R1", "R2", "R3", "R4", "R5", "R6", "R7"};
        return names[r - kRegR0];
      }
      return "?";
  }
}

const char* rtlOpName(RtlOp op) {
  switch (op) {
    case RtlOp::MoveRR: return "MoveRR";
    case RtlOp::MoveCqR: return "MoveCqR";
    case RtlOp::MoveMwR: return "MoveMwR";
    case RtlOp::MoveRMw: return "MoveRMw";
    case RtlOp::AddRR: return "AddRR";
    case RtlOp::AddCqR: return "AddCqR";
    case RtlOp::SubRR: return "SubRR";
    case RtlOp::SubCqR: return "SubCqR";
    case RtlOp::MulRR: return "MulRR";
    case RtlOp::AndRR: return "AndRR";
    case RtlOp::AndCqR: return "AndCqR";
    case RtlOp::LslCqR: return "LslCqR";
    case RtlOp::AsrCqR: return "AsrCqR";
    case RtlOp::TstCqR: return "TstCqR";
    case RtlOp::CmpCqR: return "CmpCqR";
    case RtlOp::CmpRR: return "CmpRR";
    case RtlOp::JumpZero: return "JumpZero";
    case RtlOp::JumpNonZero: return "JumpNonZero";
    case RtlOp::JumpOverflow: return "JumpOverflow";
    case RtlOp::JumpLess: return "JumpLess";
    case RtlOp::JumpGreaterOrEqual: return "JumpGreaterOrEqual";
    case RtlOp::JumpAlways: return "JumpAlways";
    case RtlOp::Label: return "Label";
    case RtlOp::PushR: return "PushR";
    case RtlOp::PushCq: return "PushCq";
    case RtlOp::PushMw: return "PushMw";
    case RtlOp::PopR: return "PopR";
    case RtlOp::CallTrampoline: return "CallTrampoline";
    case RtlOp::SendSite: return "SendSite";
    case RtlOp::RetR: return "RetR";
  }
  return "?";
}

const char* trampolineName(int32_t id) {
  switch (id) {
    case kTrampSendMiss: return "ceSendMiss";
    case kTrampMustBeBoolean: return "ceSendMustBeBoolean";
    case kTrampDeoptimize: return "ceDeoptimize";
    case kTrampInterpretPrimitiveFallback: return "ceInterpretPrimitiveFallback";
    case kTrampAllocateArray: return "ceAllocateArray";
  }
  return "?";
}

bool rtlSetsFlags(RtlOp op) {
  switch (op) {
    case RtlOp::AddRR: case RtlOp::AddCqR: case RtlOp::SubRR: case RtlOp::SubCqR:
    case RtlOp::MulRR: case RtlOp::AndRR: case RtlOp::AndCqR: case RtlOp::LslCqR:
    case RtlOp::AsrCqR: case RtlOp::TstCqR: case RtlOp::CmpCqR: case RtlOp::CmpRR:
      return true;
    default:
      return false;
  }
}

bool rtlReadsFlags(RtlOp op) {
  switch (op) {
    case RtlOp::JumpZero: case RtlOp::JumpNonZero: case RtlOp::JumpOverflow:
    case RtlOp::JumpLess: case RtlOp::JumpGreaterOrEqual:
      return true;
    default:
      return false;
  }
}

bool rtlIsJump(RtlOp op) {
  return rtlReadsFlags(op) || op == RtlOp::JumpAlways;
}

std::string disassembleRtl(const std::vector<RtlInstr>& code) {
  std::ostringstream out;
  for (size_t i = 0; i < code.size(); i++) {
    const RtlInstr& ins = code[i];
    if (ins.op == RtlOp::Label) {
      out << "L" << ins.label << ":\n";
      continue;
    }
    out << "  " << rtlOpName(ins.op);
    switch (ins.op) {
      case RtlOp::MoveRR:
        out << " " << regName(ins.src) << " -> " << regName(ins.dst);
        break;
      case RtlOp::MoveCqR:
        out << " " << ins.imm << " -> " << regName(ins.dst);
        break;
      case RtlOp::MoveMwR:
        out << " [" << regName(ins.base) << (ins.imm >= 0 ? "+" : "") << ins.imm
            << "] -> " << regName(ins.dst);
        break;
      case RtlOp::MoveRMw:
        out << " " << regName(ins.src) << " -> [" << regName(ins.base)
            << (ins.imm >= 0 ? "+" : "") << ins.imm << "]";
        break;
      case RtlOp::AddRR: case RtlOp::SubRR: case RtlOp::MulRR: case RtlOp::AndRR:
      case RtlOp::CmpRR:
        out << " " << regName(ins.src) << ", " << regName(ins.dst);
        break;
      case RtlOp::AddCqR: case RtlOp::SubCqR: case RtlOp::AndCqR: case RtlOp::LslCqR:
      case RtlOp::AsrCqR: case RtlOp::TstCqR: case RtlOp::CmpCqR:
        out << " " << ins.imm << ", " << regName(ins.dst);
        break;
      case RtlOp::JumpZero: case RtlOp::JumpNonZero: case RtlOp::JumpOverflow:
      case RtlOp::JumpLess: case RtlOp::JumpGreaterOrEqual: case RtlOp::JumpAlways:
        out << " L" << ins.label;
        break;
      case RtlOp::PushR:
        out << " " << regName(ins.src);
        break;
      case RtlOp::PushCq:
        out << " " << ins.imm;
        break;
      case RtlOp::PushMw:
        out << " [" << regName(ins.base) << (ins.imm >= 0 ? "+" : "") << ins.imm << "]";
        break;
      case RtlOp::PopR:
        out << " " << regName(ins.dst);
        break;
      case RtlOp::CallTrampoline:
        out << " " << trampolineName(ins.aux) << " imm=" << ins.imm;
        break;
      case RtlOp::SendSite:
        out << " site=" << ins.aux << " selector=" << ins.imm
            << " nargs=" << int(ins.src);
        break;
      case RtlOp::RetR:
        out << " " << regName(ins.src);
        break;
      default:
        break;
    }
    out << "\n";
  }
  return out.str();
}

std::vector<std::string> checkFlagDiscipline(const std::vector<RtlInstr>& code) {
  std::vector<std::string> problems;
  // Conservative linear scan: after a label or a call, flags are unknown;
  // a conditional jump must directly follow a setter chainable through
  // flag-neutral moves/pushes.
  bool flagsValid = false;
  for (size_t i = 0; i < code.size(); i++) {
    const RtlInstr& ins = code[i];
    if (rtlSetsFlags(ins.op)) {
      flagsValid = true;
      continue;
    }
    if (rtlReadsFlags(ins.op)) {
      if (!flagsValid)
        problems.push_back("conditional jump at " + std::to_string(i) +
                           " without live flags");
      continue;  // flags stay valid for chained conditional jumps
    }
    switch (ins.op) {
      case RtlOp::MoveRR: case RtlOp::MoveCqR: case RtlOp::MoveMwR: case RtlOp::MoveRMw:
      case RtlOp::PushR: case RtlOp::PushCq: case RtlOp::PushMw: case RtlOp::PopR:
        break;  // flag-neutral
      case RtlOp::Label: case RtlOp::JumpAlways: case RtlOp::CallTrampoline:
      case RtlOp::SendSite: case RtlOp::RetR:
        flagsValid = false;
        break;
      default:
        flagsValid = false;
        break;
    }
  }
  return problems;
}

}  // namespace druidlet
