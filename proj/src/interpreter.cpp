#include "druidlet/interpreter.hpp"

#include "druidlet/handler_eval.hpp"
#include "druidlet/opcodes.hpp"

namespace druidlet {

EffectTrace equivalenceTrace(const EffectTrace& t) {
  EffectTrace out;
  for (auto& e : t)
    if (e.kind == TraceEvent::Kind::Send || e.kind == TraceEvent::Kind::PrimFailed)
      out.push_back(e);
  return out;
}

namespace {
constexpr uint64_t kRtlFuelFactor = 64;
}

// Context for bytecode handler evaluation against the live frame.
struct InterpHandlerCtx {
  Vm& vm;

  int64_t stackTop() { return stackValue(0); }
  int64_t stackValue(int64_t d) {
    uint64_t addr = vm.sp_ - 8 - 8 * uint64_t(d);
    if (int64_t(addr) < vm.operandStackBase())
      throw VmError(ErrorKind::VmBug, "operand stack underflow");
    return int64_t(vm.mem_.load64(addr));
  }
  void push(int64_t v) { vm.pushWord(uint64_t(v)); }
  void pop(int64_t n) {
    uint64_t addr = vm.sp_ - 8 * uint64_t(n);
    if (int64_t(addr) < vm.operandStackBase())
      throw VmError(ErrorKind::VmBug, "operand stack underflow");
    vm.sp_ = addr;
  }
  int64_t operandByte(int i) { return vm.operandBytes_[i & 1]; }
  int64_t currentBytecode() { return vm.currentBytecode_; }
  int64_t bytecodePC() { return vm.pc_; }
  int64_t primFailCode() { return 0; }
  int64_t methodObj() { return int64_t(vm.method_); }
  int64_t tempAt(int64_t i) { return int64_t(vm.mem_.load64(tempAddr(i))); }
  void tempAtPut(int64_t i, int64_t v) { vm.mem_.store64(tempAddr(i), uint64_t(v)); }
  uint64_t tempAddr(int64_t i) {
    int64_t argc = int64_t(vm.mem_.load64(vm.fp_ + kFrameArgCount));
    MethodRef m{vm.method_};
    if (i < 0 || i >= argc + m.numTemps(vm.mem_))
      throw VmError(ErrorKind::VmBug, "temp index out of range");
    if (i < argc) return vm.fp_ - 8 * uint64_t(argc - i);
    return vm.fp_ + kFrameTempBase + 8 * uint64_t(i - argc);
  }
  int64_t receiver() {
    int64_t argc = int64_t(vm.mem_.load64(vm.fp_ + kFrameArgCount));
    return int64_t(vm.mem_.load64(vm.fp_ - 8 * uint64_t(argc + 1)));
  }
  int64_t nilObject() { return int64_t(kNilRef); }
  int64_t trueObject() { return int64_t(kTrueRef); }
  int64_t falseObject() { return int64_t(kFalseRef); }
  int64_t fetchPointer(int64_t i, int64_t obj) {
    return int64_t(vm.mem_.fetchPointer(uint32_t(i), Value{uint64_t(obj)}).word);
  }
  void storePointer(int64_t i, int64_t obj, int64_t v) {
    vm.mem_.storePointerUnchecked(uint32_t(i), Value{uint64_t(obj)}, Value{uint64_t(v)});
  }
  int64_t numSlotsOf(int64_t obj) { return vm.mem_.numSlotsOf(uint64_t(obj)); }
  int64_t classIndexOf(int64_t obj) { return vm.classOf(Value{uint64_t(obj)}); }
  int64_t newArrayOf(int64_t n) {
    if (n < 0 || n > int64_t(1) << 32)
      throw VmError(ErrorKind::VmBug, "bad array size");
    return int64_t(vm.mem_.allocate(kClassArray, uint32_t(n)));
  }
  void mustBeBoolean(int64_t v) {
    (void)v;
    throw VmError(ErrorKind::MustBeBoolean, "conditional jump on a non-boolean");
  }
};

// Primitive activation reads the pending send's receiver/args directly from
// the caller's operand stack; no frame exists yet.
struct InterpPrimCtx {
  Vm& vm;

  int64_t stackTop() { return stackValue(0); }
  int64_t stackValue(int64_t d) {
    return int64_t(vm.mem_.load64(vm.sp_ - 8 - 8 * uint64_t(d)));
  }
  void push(int64_t) { throw VmError(ErrorKind::VmBug, "push in primitive"); }
  void pop(int64_t) { throw VmError(ErrorKind::VmBug, "pop in primitive"); }
  int64_t operandByte(int) { throw VmError(ErrorKind::VmBug, "operand byte in primitive"); }
  int64_t currentBytecode() { return 0; }
  int64_t bytecodePC() { return 0; }
  int64_t primFailCode() { return 0; }
  int64_t methodObj() { return 0; }
  int64_t tempAt(int64_t) { throw VmError(ErrorKind::VmBug, "temp in primitive"); }
  void tempAtPut(int64_t, int64_t) { throw VmError(ErrorKind::VmBug, "temp in primitive"); }
  int64_t receiver() { throw VmError(ErrorKind::VmBug, "receiver in primitive"); }
  int64_t nilObject() { return int64_t(kNilRef); }
  int64_t trueObject() { return int64_t(kTrueRef); }
  int64_t falseObject() { return int64_t(kFalseRef); }
  int64_t fetchPointer(int64_t i, int64_t obj) {
    return int64_t(vm.mem_.fetchPointer(uint32_t(i), Value{uint64_t(obj)}).word);
  }
  void storePointer(int64_t i, int64_t obj, int64_t v) {
    vm.mem_.storePointerUnchecked(uint32_t(i), Value{uint64_t(obj)}, Value{uint64_t(v)});
  }
  int64_t numSlotsOf(int64_t obj) { return vm.mem_.numSlotsOf(uint64_t(obj)); }
  int64_t classIndexOf(int64_t obj) { return vm.classOf(Value{uint64_t(obj)}); }
  int64_t newArrayOf(int64_t n) {
    if (n < 0 || n > int64_t(1) << 32)
      throw VmError(ErrorKind::VmBug, "bad array size");
    return int64_t(vm.mem_.allocate(kClassArray, uint32_t(n)));
  }
  void mustBeBoolean(int64_t) {
    throw VmError(ErrorKind::VmBug, "mustBeBoolean in primitive");
  }
};

Vm::Vm(const ProgramImage& image, const VmConfig& cfg)
    : image_(image),
      vmdef_(builtinVmDefinition()),
      cfg_(cfg),
      mem_(cfg.heapBytes, cfg.stackBytes) {
  if (image.memory.allocationTop() > cfg.heapBytes)
    throw VmError(ErrorKind::HeapExhausted, "image larger than the configured heap");
  mem_.resetFrom(image.memory);
  mem_.growStackTo(mem_.stackLimit());
  fuel_ = cfg.fuel;
  rtlFuel_ = cfg.fuel * kRtlFuelFactor;
  sp_ = mem_.stackBase();
}

Vm::~Vm() = default;

void Vm::setJit(std::unique_ptr<JitTier> jit) { jit_ = std::move(jit); }

uint32_t Vm::classOf(Value v) const {
  if (isSmallInt(v)) return kClassSmallInteger;
  return mem_.classIdOf(v.word);
}

void Vm::recordSend(uint32_t classId, uint16_t selector) {
  counters_.sends++;
  if (traceEnabled_) trace_.push_back({TraceEvent::Kind::Send, classId, selector, 0});
}

void Vm::recordPrimFailed(int primitiveId) {
  counters_.primFails++;
  if (traceEnabled_)
    trace_.push_back({TraceEvent::Kind::PrimFailed, 0, 0, primitiveId});
}

void Vm::recordDeopt() {
  counters_.deopts++;
  if (traceEnabled_) trace_.push_back({TraceEvent::Kind::Deopt, 0, 0, 0});
}

void Vm::consumeRtlFuel(uint64_t instructions) {
  if (instructions > rtlFuel_)
    throw VmError(ErrorKind::FuelExhausted, "compiled-code budget exhausted");
  rtlFuel_ -= instructions;
}

void Vm::setCurrentMethod(uint64_t methodRef) {
  method_ = methodRef;
  MethodRef m{methodRef};
  bytecodeBase_ = m.bytecodeBase(mem_);
  bytecodeCount_ = m.bytecodeCount(mem_);
}

void Vm::pushWord(uint64_t w) {
  if (sp_ + 8 > mem_.stackLimit())
    throw VmError(ErrorKind::StackOverflow, "value stack overflow");
  mem_.store64(sp_, w);
  sp_ += 8;
}

uint64_t Vm::popWord() {
  sp_ -= 8;
  return mem_.load64(sp_);
}

int64_t Vm::operandStackBase() const {
  MethodRef m{method_};
  return int64_t(fp_ + kFrameTempBase + 8 * uint64_t(m.numTemps(mem_)));
}

void Vm::buildFrame(uint64_t methodRef, int argc, int64_t savedPc) {
  MethodRef m{methodRef};
  int numTemps = m.numTemps(mem_);
  if (sp_ + 8 * uint64_t(4 + numTemps) > mem_.stackLimit())
    throw VmError(ErrorKind::StackOverflow, "value stack overflow");
  uint64_t newFp = sp_;
  mem_.store64(newFp + kFrameSavedFp, fp_);
  mem_.store64(newFp + kFrameSavedPc, uint64_t(savedPc));
  mem_.store64(newFp + kFrameMethod, methodRef);
  mem_.store64(newFp + kFrameArgCount, uint64_t(argc));
  for (int i = 0; i < numTemps; i++)
    mem_.store64(newFp + kFrameTempBase + 8 * uint64_t(i), kNilRef);
  fp_ = newFp;
  sp_ = newFp + kFrameTempBase + 8 * uint64_t(numTemps);
  pc_ = 0;
  setCurrentMethod(methodRef);
}

Value Vm::doReturn(Value result, uint64_t barrierFp, bool& hitBarrier) {
  uint64_t savedFp = mem_.load64(fp_ + kFrameSavedFp);
  int64_t savedPc = int64_t(mem_.load64(fp_ + kFrameSavedPc));
  int64_t argc = int64_t(mem_.load64(fp_ + kFrameArgCount));
  uint64_t returningFp = fp_;
  sp_ = fp_ - 8 * uint64_t(argc + 1);
  if (returningFp == barrierFp) {
    hitBarrier = true;
    return result;
  }
  if (savedFp == kNoCaller)
    throw VmError(ErrorKind::VmBug, "return past the entry frame");
  fp_ = savedFp;
  pc_ = savedPc;
  setCurrentMethod(mem_.load64(fp_ + kFrameMethod));
  pushWord(result.word);
  hitBarrier = false;
  return Value{};
}

uint64_t Vm::lookupMethod(uint32_t classId, uint16_t selectorId) {
  counters_.lookups++;
  return image_.lookupMethod(classId, selectorId);
}

bool Vm::activatePrimitive(const HandlerDef& prim, int primitiveId) {
  InterpPrimCtx ctx{*this};
  HandlerEvaluator<InterpPrimCtx> eval(vmdef_, ctx);
  HandlerOutcome out = eval.run(prim);
  if (out.kind == HandlerOutcome::Kind::PrimResult) {
    sp_ -= 8 * uint64_t(out.a);
    pushWord(uint64_t(out.value));
    return true;
  }
  if (out.kind == HandlerOutcome::Kind::PrimFail) {
    recordPrimFailed(primitiveId);
    return false;
  }
  throw VmError(ErrorKind::VmBug, "primitive produced a bytecode outcome");
}

void Vm::dispatchSend(uint16_t selectorId, int argc, uint64_t barrierFp) {
  (void)barrierFp;
  uint64_t rcvrAddr = sp_ - 8 * uint64_t(argc + 1);
  if (int64_t(rcvrAddr) < operandStackBase())
    throw VmError(ErrorKind::VmBug, "send with too few stack entries");
  Value receiver{mem_.load64(rcvrAddr)};
  uint32_t classId = classOf(receiver);
  uint64_t methodRef = lookupMethod(classId, selectorId);
  if (methodRef == 0)
    throw VmError(ErrorKind::DoesNotUnderstand,
                  "class " + std::to_string(classId) + " does not understand " +
                      image_.selectorName(selectorId));
  if (jit_ && jit_->tryCall(methodRef, argc)) return;  // result already pushed
  MethodRef m{methodRef};
  int primId = m.primitiveId(mem_);
  if (primId != 0) {
    const HandlerDef* prim = vmdef_.primitiveById(primId);
    if (prim && activatePrimitive(*prim, primId)) return;
    // failed (or unknown) primitive: run the fallback bytecode body
  }
  buildFrame(methodRef, argc, pc_);
}

Value Vm::activateInterpreted(uint64_t methodRef, uint64_t sp, int argc) {
  uint64_t savedFp = fp_, savedMethod = method_;
  int64_t savedPc = pc_;
  sp_ = sp;
  Value result;
  MethodRef m{methodRef};
  int primId = m.primitiveId(mem_);
  bool done = false;
  if (primId != 0) {
    const HandlerDef* prim = vmdef_.primitiveById(primId);
    if (prim && activatePrimitive(*prim, primId)) {
      result = Value{popWord()};
      done = true;
    }
  }
  if (!done) {
    // The new frame's saved slots are never consulted: interpretLoop stops at
    // this frame's return (barrier).
    buildFrame(methodRef, argc, 0);
    result = interpretLoop(fp_);
  }
  fp_ = savedFp;
  pc_ = savedPc;
  if (savedMethod != 0) setCurrentMethod(savedMethod);
  return result;
}

Value Vm::resumeAfterDeopt(uint64_t fp, uint64_t sp, uint64_t methodRef, int64_t pc) {
  uint64_t savedFp = fp_, savedMethod = method_;
  int64_t savedPc = pc_;
  recordDeopt();
  fp_ = fp;
  sp_ = sp;
  pc_ = pc;
  setCurrentMethod(methodRef);
  Value result = interpretLoop(fp);
  fp_ = savedFp;
  pc_ = savedPc;
  if (savedMethod != 0) setCurrentMethod(savedMethod);
  return result;
}

Value Vm::interpretLoop(uint64_t barrierFp) {
  InterpHandlerCtx ctx{*this};
  HandlerEvaluator<InterpHandlerCtx> eval(vmdef_, ctx);

  while (true) {
    if (pc_ < 0 || pc_ >= bytecodeCount_)
      throw VmError(ErrorKind::VmBug, "pc out of range");
    if (fuel_ == 0) throw VmError(ErrorKind::FuelExhausted, "fuel exhausted");
    fuel_--;
    counters_.executedBytecodes++;

    uint8_t op = mem_.loadByte(bytecodeBase_ + uint64_t(pc_));
    const TableEntry& entry = vmdef_.table[op];
    if (entry.handler == nullptr)
      throw VmError(ErrorKind::UnknownBytecode,
                    "unknown bytecode 0x" + std::to_string(op));
    currentBytecode_ = op;
    int operands = entry.operandCount;
    for (int i = 0; i < operands; i++)
      operandBytes_[i] = mem_.loadByte(bytecodeBase_ + uint64_t(pc_ + 1 + i));
    int64_t pcAfter = pc_ + 1 + operands;

    // Special-selector sends record the semantic send up front, whether the
    // inlined fast path or the full send completes it.
    if (entry.specialSelectorIndex >= 0) {
      uint64_t rcvrAddr = sp_ - 16;
      if (int64_t(rcvrAddr) < operandStackBase())
        throw VmError(ErrorKind::VmBug, "send with too few stack entries");
      recordSend(classOf(Value{mem_.load64(rcvrAddr)}),
                 vmdef_.specialSelectors[entry.specialSelectorIndex]);
    }

    int64_t spBefore = int64_t(sp_);
    HandlerOutcome out = eval.run(*entry.handler);

    switch (out.kind) {
      case HandlerOutcome::Kind::FetchNext:
        pc_ = pcAfter;
        break;
      case HandlerOutcome::Kind::Jump:
        pc_ = pcAfter + out.a;
        break;
      case HandlerOutcome::Kind::BooleanCheat: {
        // the cheat consumes the two compared operands itself
        if (int64_t(sp_) - 16 < operandStackBase())
          throw VmError(ErrorKind::VmBug, "operand stack underflow");
        sp_ -= 16;
        bool flag = out.a != 0;
        uint8_t next = pcAfter < bytecodeCount_
                           ? mem_.loadByte(bytecodeBase_ + uint64_t(pcAfter))
                           : 0;
        if (pcAfter < bytecodeCount_ && next >= kOpShortJumpTrue &&
            next <= kOpShortJumpFalse + 7) {
          bool wantTrue = next <= kOpShortJumpTrue + 7;
          int64_t offset = (next & 7) + 1;
          int64_t jumpPcAfter = pcAfter + 1;
          counters_.executedBytecodes++;
          pc_ = (flag == wantTrue) ? jumpPcAfter + offset : jumpPcAfter;
        } else {
          pushWord(flag ? kTrueRef : kFalseRef);
          pc_ = pcAfter;
        }
        break;
      }
      case HandlerOutcome::Kind::SendSpecial: {
        pc_ = pcAfter;
        uint16_t selector = vmdef_.specialSelectors[out.a];
        dispatchSend(selector, int(out.b), barrierFp);
        break;
      }
      case HandlerOutcome::Kind::SendLiteral: {
        pc_ = pcAfter;
        MethodRef m{method_};
        if (out.a < 0 || out.a >= m.numLiterals(mem_))
          throw VmError(ErrorKind::VmBug, "selector literal out of range");
        Value sel = m.literalAt(mem_, int(out.a));
        uint16_t selector = uint16_t(smallIntValue(sel));
        uint64_t rcvrAddr = sp_ - 8 * uint64_t(out.b + 1);
        if (int64_t(rcvrAddr) < operandStackBase())
          throw VmError(ErrorKind::VmBug, "send with too few stack entries");
        recordSend(classOf(Value{mem_.load64(rcvrAddr)}), selector);
        dispatchSend(selector, int(out.b), barrierFp);
        break;
      }
      case HandlerOutcome::Kind::MethodReturn: {
        bool hitBarrier = false;
        Value result = doReturn(Value{uint64_t(out.value)}, barrierFp, hitBarrier);
        if (hitBarrier) return result;
        break;
      }
      default:
        throw VmError(ErrorKind::VmBug, "bytecode handler produced a primitive outcome");
    }

    // Stack-balance invariant for handlers with a static delta.
    if (entry.stackDelta &&
        (out.kind == HandlerOutcome::Kind::FetchNext ||
         out.kind == HandlerOutcome::Kind::Jump)) {
      if (int64_t(sp_) - spBefore != 8 * int64_t(*entry.stackDelta))
        throw VmError(ErrorKind::VmBug,
                      "stack delta mismatch for " + entry.handlerName);
    }
  }
}

RunResult Vm::run() {
  RunResult rr;
  try {
    uint64_t entry = image_.entryMethod;
    if (entry == 0) throw VmError(ErrorKind::VmBug, "image has no entry method");
    sp_ = mem_.stackBase();
    fp_ = 0;
    method_ = 0;
    pushWord(kNilRef);  // entry receiver
    MethodRef m{entry};
    if (m.numArgs(mem_) != 0)
      throw VmError(ErrorKind::VmBug, "entry method must take no arguments");
    if (jit_ && jit_->tryCall(entry, 0)) {
      rr.result = Value{popWord()};
    } else {
      int primId = m.primitiveId(mem_);
      bool done = false;
      if (primId != 0) {
        const HandlerDef* prim = vmdef_.primitiveById(primId);
        if (prim && activatePrimitive(*prim, primId)) {
          rr.result = Value{popWord()};
          done = true;
        }
      }
      if (!done) {
        fp_ = kNoCaller;
        buildFrame(entry, 0, 0);
        rr.result = interpretLoop(fp_);
      }
    }
  } catch (const VmError& e) {
    rr.error = e.kind;
    if (traceEnabled_)
      trace_.push_back({TraceEvent::Kind::Error, 0, 0, 0, e.kind});
  }
  rr.trace = trace_;
  rr.counters = counters_;
  return rr;
}

RunResult interpret(const ProgramImage& image, const VmConfig& cfg) {
  Vm vm(image, cfg);
  return vm.run();
}

}  // namespace druidlet
