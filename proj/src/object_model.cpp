#include "druidlet/object_model.hpp"

#include <algorithm>
#include <cstring>
#include <optional>
#include <sstream>

#include "druidlet/opcodes.hpp"

namespace druidlet {

const char* errorKindName(ErrorKind k) {
  switch (k) {
    case ErrorKind::None: return "None";
    case ErrorKind::RangeError: return "RangeError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::FuelExhausted: return "FuelExhausted";
    case ErrorKind::MustBeBoolean: return "MustBeBoolean";
    case ErrorKind::DoesNotUnderstand: return "DoesNotUnderstand";
    case ErrorKind::StackOverflow: return "StackOverflow";
    case ErrorKind::HeapExhausted: return "HeapExhausted";
    case ErrorKind::UnknownBytecode: return "UnknownBytecode";
    case ErrorKind::VmBug: return "VmBug";
  }
  return "?";
}

Value tagSmallInt(int64_t n) {
  if (!smallIntFits(n))
    throw VmError(ErrorKind::RangeError, "small integer out of range");
  return Value{uint64_t(n) << 1 | 1};
}

bool isIntegerObject(Value v) { return isSmallInt(v); }

MemorySpace::MemorySpace(uint64_t heapCapacity, uint64_t stackCapacity)
    : heapCapacity_(heapCapacity), stackCapacity_(stackCapacity), allocTop_(kHeapStart) {
  heap_.resize(kHeapStart, 0);
  // Pinned specials: nil, false, true at fixed offsets, never moved.
  auto writeHeader = [&](uint64_t off, uint32_t classId) {
    uint64_t header = uint64_t(classId);
    std::memcpy(heap_.data() + off, &header, 8);
  };
  writeHeader(kNilRef, kClassUndefinedObject);
  writeHeader(kFalseRef, kClassFalse);
  writeHeader(kTrueRef, kClassTrue);
}

uint64_t MemorySpace::load64(uint64_t addr) const {
  uint64_t w;
  if (addr < heapCapacity_) {
    if (addr + 8 > heap_.size())
      throw VmError(ErrorKind::VmBug, "heap load out of bounds");
    std::memcpy(&w, heap_.data() + addr, 8);
  } else {
    uint64_t off = addr - heapCapacity_;
    if (off + 8 > stack_.size())
      throw VmError(ErrorKind::VmBug, "stack load out of bounds");
    std::memcpy(&w, stack_.data() + off, 8);
  }
  return w;
}

void MemorySpace::store64(uint64_t addr, uint64_t w) {
  if (addr < heapCapacity_) {
    if (addr + 8 > heap_.size())
      throw VmError(ErrorKind::VmBug, "heap store out of bounds");
    std::memcpy(heap_.data() + addr, &w, 8);
  } else {
    uint64_t off = addr - heapCapacity_;
    if (off + 8 > stack_.size())
      throw VmError(ErrorKind::VmBug, "stack store out of bounds");
    std::memcpy(stack_.data() + off, &w, 8);
  }
}

uint8_t MemorySpace::loadByte(uint64_t addr) const {
  if (addr < heapCapacity_) {
    if (addr >= heap_.size())
      throw VmError(ErrorKind::VmBug, "heap byte load out of bounds");
    return heap_[addr];
  }
  uint64_t off = addr - heapCapacity_;
  if (off >= stack_.size())
    throw VmError(ErrorKind::VmBug, "stack byte load out of bounds");
  return stack_[off];
}

void MemorySpace::storeBytes(uint64_t addr, const uint8_t* data, uint64_t n) {
  if (addr + n > heap_.size())
    throw VmError(ErrorKind::VmBug, "byte store out of bounds");
  std::memcpy(heap_.data() + addr, data, n);
}

uint64_t MemorySpace::allocate(uint32_t classId, uint32_t numSlots, uint64_t extraBytes) {
  uint64_t size = 8 + 8 * uint64_t(numSlots) + ((extraBytes + 7) & ~7ull);
  uint64_t ref = allocTop_;
  if (ref + size > heapCapacity_)
    throw VmError(ErrorKind::HeapExhausted, "heap exhausted");
  if (ref + size > heap_.size()) heap_.resize(ref + size, 0);
  uint64_t header = uint64_t(classId) | (uint64_t(numSlots) << 32);
  std::memcpy(heap_.data() + ref, &header, 8);
  // Slots start nil (word 0 is the nil reference).
  allocTop_ = ref + size;
  return ref;
}

uint32_t MemorySpace::classIdOf(uint64_t ref) const {
  return uint32_t(load64(ref) & 0xFFFFFFFFu);
}

uint32_t MemorySpace::numSlotsOf(uint64_t ref) const {
  return uint32_t(load64(ref) >> 32);
}

Value MemorySpace::fetchPointer(uint32_t index, Value obj) const {
  if (isSmallInt(obj))
    throw VmError(ErrorKind::VmBug, "fetchPointer on tagged value");
  if (index >= numSlotsOf(obj.word))
    throw VmError(ErrorKind::VmBug, "fetchPointer index out of bounds");
  return Value{load64(obj.word + 8 + 8 * uint64_t(index))};
}

void MemorySpace::storePointerUnchecked(uint32_t index, Value obj, Value v) {
  if (isSmallInt(obj))
    throw VmError(ErrorKind::VmBug, "storePointer on tagged value");
  if (index >= numSlotsOf(obj.word))
    throw VmError(ErrorKind::VmBug, "storePointer index out of bounds");
  store64(obj.word + 8 + 8 * uint64_t(index), v.word);
}

void MemorySpace::growStackTo(uint64_t addr) {
  if (addr < heapCapacity_) return;
  uint64_t off = addr - heapCapacity_;
  if (off > stackCapacity_)
    throw VmError(ErrorKind::StackOverflow, "value stack overflow");
  if (off > stack_.size()) stack_.resize(off, 0);
}

void MemorySpace::resetFrom(const MemorySpace& image) {
  heap_ = image.heap_;
  allocTop_ = image.allocTop_;
  std::fill(stack_.begin(), stack_.end(), 0);
}

int MethodRef::numArgs(const MemorySpace& m) const {
  return int(m.load64(ref + 8 + 8 * kMethodNumArgsSlot));
}
int MethodRef::numTemps(const MemorySpace& m) const {
  return int(m.load64(ref + 8 + 8 * kMethodNumTempsSlot));
}
int MethodRef::primitiveId(const MemorySpace& m) const {
  return int(m.load64(ref + 8 + 8 * kMethodPrimitiveSlot));
}
int MethodRef::numLiterals(const MemorySpace& m) const {
  return int(m.load64(ref + 8 + 8 * kMethodNumLiteralsSlot));
}
int MethodRef::bytecodeCount(const MemorySpace& m) const {
  return int(m.load64(ref + 8 + 8 * kMethodBytecodeCountSlot));
}
Value MethodRef::literalAt(const MemorySpace& m, int i) const {
  return m.fetchPointer(kLiteralStart + uint32_t(i), Value{ref});
}
uint64_t MethodRef::bytecodeBase(const MemorySpace& m) const {
  return ref + 8 + 8 * uint64_t(m.numSlotsOf(ref));
}
uint8_t MethodRef::bytecodeAt(const MemorySpace& m, int pc) const {
  return m.loadByte(bytecodeBase(m) + uint64_t(pc));
}

uint64_t ProgramImage::lookupMethod(uint32_t classId, uint16_t selectorId) const {
  auto ci = classTable.find(classId);
  if (ci == classTable.end()) return 0;
  auto mi = ci->second.methods.find(selectorId);
  if (mi == ci->second.methods.end()) return 0;
  return mi->second;
}

std::string ProgramImage::selectorName(uint16_t id) const {
  auto it = selectorNames.find(id);
  if (it != selectorNames.end()) return it->second;
  return "sel#" + std::to_string(id);
}

namespace {

struct ParseError : VmError {
  ParseError(int line, int col, const std::string& msg)
      : VmError(ErrorKind::ParseError,
                "parse error at " + std::to_string(line) + ":" + std::to_string(col) +
                    ": " + msg) {}
};

struct PendingMethod {
  std::string selector;
  uint16_t selectorId = 0;
  int numArgs = 0;
  int numTemps = 0;
  int primitiveId = 0;
  std::vector<int64_t> literals;           // tagged words stored at load
  std::vector<uint8_t> bytes;
  // label fixups for longJump: byte position of hi operand -> label name
  std::vector<std::pair<size_t, std::string>> jumpFixups;
  std::map<std::string, size_t> labels;
  int declLine = 0;
};

struct PendingClass {
  std::string name;
  uint32_t id = 0;
  std::vector<PendingMethod> methods;
};

struct Tokenizer {
  std::string line;
  size_t pos = 0;
  int lineNo;
  explicit Tokenizer(const std::string& l, int n) : line(l), lineNo(n) {}

  void skipWs() {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) pos++;
  }
  bool atEnd() {
    skipWs();
    return pos >= line.size() || line[pos] == ';';
  }
  std::string next() {
    skipWs();
    size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != ';')
      pos++;
    if (start == pos) throw ParseError(lineNo, int(start + 1), "expected token");
    return line.substr(start, pos - start);
  }
};

int64_t parseInt(const std::string& tok, int lineNo) {
  try {
    size_t used = 0;
    long long v = std::stoll(tok, &used, 0);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(lineNo, 1, "bad integer '" + tok + "'");
  }
}

// Parses "key=<int>" returning the value.
int64_t parseKeyed(const std::string& tok, const std::string& key, int lineNo) {
  if (tok.rfind(key + "=", 0) != 0)
    throw ParseError(lineNo, 1, "expected " + key + "=<n>, got '" + tok + "'");
  return parseInt(tok.substr(key.size() + 1), lineNo);
}

struct ReservedClass {
  const char* name;
  uint32_t id;
};
constexpr ReservedClass kReservedClasses[] = {
    {"SmallInteger", kClassSmallInteger}, {"UndefinedObject", kClassUndefinedObject},
    {"False", kClassFalse},               {"True", kClassTrue},
    {"Array", kClassArray},               {"CompiledMethod", kClassCompiledMethod},
};

struct ReservedSelector {
  const char* name;
  uint16_t id;
};
constexpr ReservedSelector kReservedSelectors[] = {
    {"+", kSelectorAdd}, {"-", kSelectorSub}, {"*", kSelectorMul},
    {"=", kSelectorEq},  {"<", kSelectorLess},
};

}  // namespace

ProgramImage loadProgram(const std::string& text) {
  std::vector<PendingClass> classes;
  std::string entryClass, entrySelector;
  int entryLine = 0;

  PendingClass* curClass = nullptr;
  PendingMethod* curMethod = nullptr;

  std::istringstream in(text);
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    lineNo++;
    Tokenizer tok(line, lineNo);
    if (tok.atEnd()) continue;
    std::string first = tok.next();

    if (first == ".class") {
      std::string name = tok.next();
      uint32_t id = uint32_t(parseKeyed(tok.next(), "id", lineNo));
      bool reserved = false;
      for (auto& r : kReservedClasses) {
        if (id == r.id) {
          reserved = true;
          if (name != r.name)
            throw ParseError(lineNo, 1, "class id " + std::to_string(id) +
                                            " is reserved for " + r.name);
        } else if (name == r.name && id != r.id) {
          throw ParseError(lineNo, 1, "class " + name + " must use id " +
                                          std::to_string(r.id));
        }
      }
      if (!reserved && id < kFirstUserClassId)
        throw ParseError(lineNo, 1, "class ids below " +
                                        std::to_string(kFirstUserClassId) +
                                        " are reserved");
      curClass = nullptr;
      for (auto& c : classes) {
        if (c.name == name && c.id == id) {
          curClass = &c;  // reopening a class adds methods to it
        } else if (c.id == id || c.name == name) {
          throw ParseError(lineNo, 1, "class " + name + " conflicts with " + c.name);
        }
      }
      if (!curClass) {
        classes.push_back(PendingClass{name, id, {}});
        curClass = &classes.back();
      }
      curMethod = nullptr;
    } else if (first == ".method") {
      if (!curClass) throw ParseError(lineNo, 1, ".method outside .class");
      PendingMethod m;
      m.selector = tok.next();
      m.selectorId = uint16_t(parseKeyed(tok.next(), "sel", lineNo));
      m.numArgs = int(parseKeyed(tok.next(), "args", lineNo));
      m.numTemps = int(parseKeyed(tok.next(), "temps", lineNo));
      if (!tok.atEnd()) m.primitiveId = int(parseKeyed(tok.next(), "prim", lineNo));
      m.declLine = lineNo;
      for (auto& r : kReservedSelectors) {
        if (m.selector == r.name && m.selectorId != r.id)
          throw ParseError(lineNo, 1, "selector " + m.selector + " must use sel=" +
                                          std::to_string(r.id));
        if (m.selectorId == r.id && m.selector != r.name)
          throw ParseError(lineNo, 1, "sel=" + std::to_string(r.id) +
                                          " is reserved for " + r.name);
      }
      for (auto& other : curClass->methods)
        if (other.selectorId == m.selectorId || other.selector == m.selector)
          throw ParseError(lineNo, 1, "duplicate selector " + m.selector +
                                          " in class " + curClass->name);
      curClass->methods.push_back(std::move(m));
      curMethod = &curClass->methods.back();
    } else if (first == ".entry") {
      entryClass = tok.next();
      entrySelector = tok.next();
      entryLine = lineNo;
    } else {
      if (!curMethod) throw ParseError(lineNo, 1, "instruction outside .method");
      PendingMethod& m = *curMethod;
      // labels may share a line with the instruction they precede
      while (first.size() > 1 && first.back() == ':') {
        std::string name = first.substr(0, first.size() - 1);
        if (m.labels.count(name)) throw ParseError(lineNo, 1, "duplicate label " + name);
        m.labels[name] = m.bytes.size();
        if (tok.atEnd()) {
          first.clear();
          break;
        }
        first = tok.next();
      }
      if (first.empty()) continue;
      auto emit = [&](uint8_t b) { m.bytes.push_back(b); };
      auto rangeOperand = [&](int maxExclusive) {
        int64_t v = parseInt(tok.next(), lineNo);
        if (v < 0 || v >= maxExclusive)
          throw ParseError(lineNo, 1, "operand out of range");
        return int(v);
      };
      auto poolLiteral = [&](int64_t taggedWord) {
        for (size_t i = 0; i < m.literals.size(); i++)
          if (m.literals[i] == taggedWord) return int(i);
        m.literals.push_back(taggedWord);
        return int(m.literals.size() - 1);
      };

      if (first == "pushRcvrVar") {
        emit(uint8_t(kOpPushReceiverVariable + rangeOperand(16)));
      } else if (first == "pushTemp") {
        emit(uint8_t(kOpPushTemp + rangeOperand(16)));
      } else if (first == "pushLit") {
        int idx = rangeOperand(16);
        emit(uint8_t(kOpPushLiteral + idx));
      } else if (first == "pushConstant") {
        int64_t v = parseInt(tok.next(), lineNo);
        if (!smallIntFits(v)) throw ParseError(lineNo, 1, "constant out of range");
        int idx = poolLiteral(int64_t(tagSmallInt(v).word));
        if (idx >= 16) throw ParseError(lineNo, 1, "literal pool overflow");
        emit(uint8_t(kOpPushLiteral + idx));
      } else if (first == "pushNil") {
        emit(kOpPushNil);
      } else if (first == "pushTrue") {
        emit(kOpPushTrue);
      } else if (first == "pushFalse") {
        emit(kOpPushFalse);
      } else if (first == "storePopTemp") {
        emit(uint8_t(kOpStoreAndPopTemp + rangeOperand(16)));
      } else if (first == "dup") {
        emit(kOpDup);
      } else if (first == "popTop") {
        emit(kOpPopTop);
      } else if (first == "addSend") {
        emit(kOpPrimAddSend);
      } else if (first == "subSend") {
        emit(kOpPrimSubSend);
      } else if (first == "mulSend") {
        emit(kOpPrimMulSend);
      } else if (first == "eqSend") {
        emit(kOpPrimEqSend);
      } else if (first == "lessSend") {
        emit(kOpPrimLessSend);
      } else if (first == "identSend") {
        emit(kOpPrimIdenticalSend);
      } else if (first == "jumpFwd" || first == "jumpTrue" || first == "jumpFalse") {
        int64_t off = parseInt(tok.next(), lineNo);
        if (off < 1 || off > 8) throw ParseError(lineNo, 1, "short jump offset must be 1..8");
        uint8_t base = first == "jumpFwd"    ? kOpShortJumpForward
                       : first == "jumpTrue" ? kOpShortJumpTrue
                                             : kOpShortJumpFalse;
        emit(uint8_t(base + (off - 1)));
      } else if (first == "longJump") {
        std::string target = tok.next();
        if (!target.empty() && (isdigit(target[0]) || target[0] == '-')) {
          int64_t off = parseInt(target, lineNo);
          if (off < -32768 || off > 32767)
            throw ParseError(lineNo, 1, "long jump offset out of range");
          emit(kOpLongJump);
          emit(uint8_t((off >> 8) & 0xFF));
          emit(uint8_t(off & 0xFF));
        } else {
          m.jumpFixups.emplace_back(m.bytes.size(), target);
          emit(kOpLongJump);
          emit(0);
          emit(0);
        }
      } else if (first == "send") {
        std::string sel = tok.next();
        int argc = rangeOperand(16);
        // selector id resolved after all declarations; pool a placeholder
        // tagged id patched below via name.
        m.jumpFixups.emplace_back(m.bytes.size(), "@send:" + sel);
        emit(kOpSend);
        emit(0);  // literal index, patched
        emit(uint8_t(argc));
      } else if (first == "returnTop") {
        emit(kOpReturnTop);
      } else if (first == "returnReceiver") {
        emit(kOpReturnReceiver);
      } else if (first == "pushNewArray") {
        int64_t b = parseInt(tok.next(), lineNo);
        if (b < 0 || b > 255) throw ParseError(lineNo, 1, "operand byte out of range");
        emit(kOpPushNewArray);
        emit(uint8_t(b));
      } else {
        throw ParseError(lineNo, 1, "unknown mnemonic '" + first + "'");
      }
      if (!tok.atEnd()) throw ParseError(lineNo, 1, "trailing tokens");
    }
  }

  // Selector name -> id across the whole program.
  std::map<std::string, uint16_t> selIds;
  std::map<uint16_t, std::string> selNames;
  for (auto& r : kReservedSelectors) {
    selIds[r.name] = r.id;
    selNames[r.id] = r.name;
  }
  for (auto& c : classes) {
    for (auto& m : c.methods) {
      auto it = selIds.find(m.selector);
      if (it != selIds.end()) {
        if (it->second != m.selectorId)
          throw ParseError(m.declLine, 1, "selector " + m.selector +
                                              " redeclared with different id");
      } else {
        if (selNames.count(m.selectorId) && selNames[m.selectorId] != m.selector)
          throw ParseError(m.declLine, 1, "selector id " +
                                              std::to_string(m.selectorId) +
                                              " bound to two names");
        selIds[m.selector] = m.selectorId;
        selNames[m.selectorId] = m.selector;
      }
    }
  }

  // Resolve fixups, install literals, build the image.
  ProgramImage image;
  for (auto& c : classes) {
    ClassInfo info;
    info.name = c.name;
    for (auto& m : c.methods) {
      for (auto& [pos, name] : m.jumpFixups) {
        if (name.rfind("@send:", 0) == 0) {
          std::string sel = name.substr(6);
          auto it = selIds.find(sel);
          if (it == selIds.end())
            throw ParseError(m.declLine, 1, "undefined selector '" + sel + "'");
          int64_t tagged = int64_t(tagSmallInt(it->second).word);
          int idx = -1;
          for (size_t i = 0; i < m.literals.size(); i++)
            if (m.literals[i] == tagged) idx = int(i);
          if (idx < 0) {
            m.literals.push_back(tagged);
            idx = int(m.literals.size() - 1);
          }
          m.bytes[pos + 1] = uint8_t(idx);
        } else {
          auto it = m.labels.find(name);
          if (it == m.labels.end())
            throw ParseError(m.declLine, 1, "undefined label '" + name + "'");
          // offset relative to pc after the two operand bytes
          int64_t off = int64_t(it->second) - int64_t(pos + 3);
          if (off < -32768 || off > 32767)
            throw ParseError(m.declLine, 1, "label jump out of range");
          m.bytes[pos + 1] = uint8_t((off >> 8) & 0xFF);
          m.bytes[pos + 2] = uint8_t(off & 0xFF);
        }
      }
      if (m.primitiveId != 0 && m.bytes.empty())
        throw ParseError(m.declLine, 1, "primitive method needs a fallback body");

      uint32_t numSlots = kLiteralStart + uint32_t(m.literals.size());
      uint64_t ref = image.memory.allocate(kClassCompiledMethod, numSlots, m.bytes.size());
      auto setSlot = [&](uint32_t slot, uint64_t w) {
        image.memory.store64(ref + 8 + 8 * slot, w);
      };
      setSlot(kMethodNumArgsSlot, uint64_t(m.numArgs));
      setSlot(kMethodNumTempsSlot, uint64_t(m.numTemps));
      setSlot(kMethodPrimitiveSlot, uint64_t(m.primitiveId));
      setSlot(kMethodNumLiteralsSlot, m.literals.size());
      setSlot(kMethodBytecodeCountSlot, m.bytes.size());
      for (size_t i = 0; i < m.literals.size(); i++)
        setSlot(kLiteralStart + uint32_t(i), uint64_t(m.literals[i]));
      uint64_t bcodeBase = ref + 8 + 8 * numSlots;
      if (!m.bytes.empty())
        image.memory.storeBytes(bcodeBase, m.bytes.data(), m.bytes.size());
      info.methods[m.selectorId] = ref;
    }
    image.classTable[c.id] = std::move(info);
  }
  image.selectorIds = std::move(selIds);
  image.selectorNames = std::move(selNames);

  if (entryClass.empty())
    throw VmError(ErrorKind::ParseError, "entry unresolved: no .entry directive");
  uint32_t entryClassId = 0;
  bool found = false;
  for (auto& [id, info] : image.classTable)
    if (info.name == entryClass) {
      entryClassId = id;
      found = true;
    }
  if (!found)
    throw ParseError(entryLine, 1, "entry unresolved: class " + entryClass);
  auto selIt = image.selectorIds.find(entrySelector);
  if (selIt == image.selectorIds.end())
    throw ParseError(entryLine, 1, "entry unresolved: selector " + entrySelector);
  image.entryClassId = entryClassId;
  image.entrySelectorId = selIt->second;
  image.entryMethod = image.lookupMethod(entryClassId, selIt->second);
  if (image.entryMethod == 0)
    throw ParseError(entryLine, 1, "entry unresolved: no such method");
  return image;
}

namespace {

std::string literalText(const ProgramImage&, Value v) {
  if (isSmallInt(v)) return std::to_string(smallIntValue(v));
  if (v.word == kNilRef) return "nil";
  if (v.word == kTrueRef) return "true";
  if (v.word == kFalseRef) return "false";
  return "obj@" + std::to_string(v.word);
}

}  // namespace

std::string disassembleMethod(const ProgramImage& image, uint64_t methodRef) {
  const MemorySpace& m = image.memory;
  MethodRef method{methodRef};
  std::ostringstream out;
  int count = method.bytecodeCount(m);
  int pc = 0;
  while (pc < count) {
    uint8_t op = method.bytecodeAt(m, pc);
    out << "  " << pc << ": ";
    if (op <= 0x0F) out << "pushRcvrVar " << (op & 0xF);
    else if (op >= 0x10 && op <= 0x1F) out << "pushTemp " << (op & 0xF);
    else if (op >= 0x20 && op <= 0x2F) {
      Value lit = method.literalAt(m, op & 0xF);
      if (isSmallInt(lit))
        out << "pushConstant " << smallIntValue(lit);
      else
        out << "pushLit " << (op & 0xF) << "  ; " << literalText(image, lit);
    } else if (op == kOpPushNil) out << "pushNil";
    else if (op == kOpPushTrue) out << "pushTrue";
    else if (op == kOpPushFalse) out << "pushFalse";
    else if (op >= 0x40 && op <= 0x4F) out << "storePopTemp " << (op & 0xF);
    else if (op == kOpDup) out << "dup";
    else if (op == kOpPopTop) out << "popTop";
    else if (op == kOpPrimAddSend) out << "addSend";
    else if (op == kOpPrimSubSend) out << "subSend";
    else if (op == kOpPrimMulSend) out << "mulSend";
    else if (op == kOpPrimEqSend) out << "eqSend";
    else if (op == kOpPrimLessSend) out << "lessSend";
    else if (op == kOpPrimIdenticalSend) out << "identSend";
    else if (op >= 0x70 && op <= 0x77) out << "jumpFwd " << ((op & 7) + 1);
    else if (op >= 0x78 && op <= 0x7F) out << "jumpTrue " << ((op & 7) + 1);
    else if (op >= 0x80 && op <= 0x87) out << "jumpFalse " << ((op & 7) + 1);
    else if (op == kOpLongJump) {
      int16_t off = int16_t((method.bytecodeAt(m, pc + 1) << 8) |
                            method.bytecodeAt(m, pc + 2));
      out << "longJump " << off << "  ; -> " << (pc + 3 + off);
    } else if (op == kOpSend) {
      uint8_t litIdx = method.bytecodeAt(m, pc + 1);
      uint8_t argc = method.bytecodeAt(m, pc + 2);
      Value sel = method.literalAt(m, litIdx);
      out << "send " << image.selectorName(uint16_t(smallIntValue(sel))) << " "
          << int(argc);
    } else if (op == kOpReturnTop) out << "returnTop";
    else if (op == kOpReturnReceiver) out << "returnReceiver";
    else if (op == kOpPushNewArray)
      out << "pushNewArray " << int(method.bytecodeAt(m, pc + 1));
    else out << "unknown 0x" << std::hex << int(op) << std::dec;
    out << "\n";
    pc += instructionLength(op);
  }
  return out.str();
}

std::string disassembleProgram(const ProgramImage& image) {
  std::ostringstream out;
  // emit in heap allocation order so reassembly reproduces the image exactly
  std::vector<std::pair<uint64_t, uint32_t>> classOrder;  // (first method ref, classId)
  for (auto& [classId, info] : image.classTable) {
    uint64_t first = ~0ull;
    for (auto& [sel, ref] : info.methods) first = std::min(first, ref);
    classOrder.emplace_back(first, classId);
  }
  std::sort(classOrder.begin(), classOrder.end());
  for (auto& [firstRef, classId] : classOrder) {
    const ClassInfo& info = image.classTable.at(classId);
    out << ".class " << info.name << " id=" << classId << "\n";
    std::vector<std::pair<uint64_t, uint16_t>> methodOrder;
    for (auto& [sel, ref] : info.methods) methodOrder.emplace_back(ref, sel);
    std::sort(methodOrder.begin(), methodOrder.end());
    for (auto& [ref, sel] : methodOrder) {
      MethodRef method{ref};
      out << ".method " << image.selectorName(sel) << " sel=" << sel
          << " args=" << method.numArgs(image.memory)
          << " temps=" << method.numTemps(image.memory);
      if (method.primitiveId(image.memory) != 0)
        out << " prim=" << method.primitiveId(image.memory);
      out << "\n" << disassembleMethod(image, ref);
    }
  }
  auto entryClass = image.classTable.find(image.entryClassId);
  if (entryClass != image.classTable.end())
    out << ".entry " << entryClass->second.name << " "
        << image.selectorName(image.entrySelectorId) << "\n";
  return out.str();
}

}  // namespace druidlet
