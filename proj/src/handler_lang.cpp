#include "druidlet/handler_lang.hpp"

#include <cctype>
#include <cstring>
#include <functional>
#include <sstream>

namespace druidlet {

namespace {

const IntrinsicInfo kCatalog[] = {
    {Intrinsic::Add, "add", 2, EffectClass::Pure},
    {Intrinsic::Sub, "sub", 2, EffectClass::Pure},
    {Intrinsic::Mul, "mul", 2, EffectClass::Pure},
    {Intrinsic::BitAnd, "bitAnd", 2, EffectClass::Pure},
    {Intrinsic::ShiftLeft, "shl", 2, EffectClass::Pure},
    {Intrinsic::ShiftRight, "shr", 2, EffectClass::Pure},
    {Intrinsic::CmpEq, "eq", 2, EffectClass::Pure},
    {Intrinsic::CmpNe, "ne", 2, EffectClass::Pure},
    {Intrinsic::CmpLt, "lt", 2, EffectClass::Pure},
    {Intrinsic::CmpLe, "le", 2, EffectClass::Pure},
    {Intrinsic::CmpGt, "gt", 2, EffectClass::Pure},
    {Intrinsic::CmpGe, "ge", 2, EffectClass::Pure},
    {Intrinsic::StackTop, "stackTop", 0, EffectClass::Stack},
    {Intrinsic::StackValue, "stackValue", 1, EffectClass::Stack},
    {Intrinsic::Push, "push", 1, EffectClass::Stack},
    {Intrinsic::Pop, "pop", 1, EffectClass::Stack},
    {Intrinsic::PopThenPush, "popThenPush", 2, EffectClass::Stack},
    {Intrinsic::FetchByte, "fetchByte", 0, EffectClass::Memory},
    {Intrinsic::FetchNextBytecode, "fetchNextBytecode", 0, EffectClass::Control},
    {Intrinsic::JumpBy, "jump", 1, EffectClass::Control},
    {Intrinsic::IsIntegerObject, "isIntegerObject", 1, EffectClass::Pure},
    {Intrinsic::FetchPointer, "fetchPointer", 2, EffectClass::Memory},
    {Intrinsic::StorePointer, "storePointer", 3, EffectClass::Memory},
    {Intrinsic::NumSlots, "numSlots", 1, EffectClass::Pure},
    {Intrinsic::ClassIndex, "classIndex", 1, EffectClass::Pure},
    {Intrinsic::NewArrayOf, "newArrayOf", 1, EffectClass::RuntimeCall},
    {Intrinsic::TempAt, "tempAt", 1, EffectClass::Memory},
    {Intrinsic::TempAtPut, "tempAtPut", 2, EffectClass::Memory},
    {Intrinsic::Receiver, "receiver", 0, EffectClass::Pure},
    {Intrinsic::NilObject, "nilObject", 0, EffectClass::Pure},
    {Intrinsic::TrueObject, "trueObject", 0, EffectClass::Pure},
    {Intrinsic::FalseObject, "falseObject", 0, EffectClass::Pure},
    {Intrinsic::PrimitiveFail, "primitiveFail", 0, EffectClass::Control},
    {Intrinsic::SendSpecial, "sendSpecial", 2, EffectClass::Send},
    {Intrinsic::SendLiteral, "sendLiteral", 2, EffectClass::Send},
    {Intrinsic::MustBeBoolean, "mustBeBoolean", 1, EffectClass::RuntimeCall},
    {Intrinsic::CommonReturn, "commonReturn", 1, EffectClass::Control},
    {Intrinsic::BooleanCheat, "booleanCheat", 1, EffectClass::Control},
    {Intrinsic::ForceInterpretation, "forceInterpretation", 0, EffectClass::Guiding},
    {Intrinsic::CurrentBytecode, "currentBytecode", 0, EffectClass::Pure},
    {Intrinsic::BytecodePC, "bytecodePC", 0, EffectClass::Pure},
    {Intrinsic::PrimFailCode, "primFailCode", 0, EffectClass::Pure},
    {Intrinsic::Byte1, "byte1", 0, EffectClass::Pure},
    {Intrinsic::Byte2, "byte2", 0, EffectClass::Pure},
    {Intrinsic::MethodObj, "methodObj", 0, EffectClass::Pure},
};

constexpr const char* kNotName = "not";

bool isComparison(Intrinsic id) {
  switch (id) {
    case Intrinsic::CmpEq: case Intrinsic::CmpNe: case Intrinsic::CmpLt:
    case Intrinsic::CmpLe: case Intrinsic::CmpGt: case Intrinsic::CmpGe:
    case Intrinsic::IsIntegerObject:
      return true;
    default:
      return false;
  }
}

}  // namespace

const IntrinsicInfo* intrinsicByName(const std::string& name) {
  for (auto& e : kCatalog)
    if (name == e.name) return &e;
  return nullptr;
}

const IntrinsicInfo& intrinsicInfo(Intrinsic id) {
  for (auto& e : kCatalog)
    if (e.id == id) return e;
  throw std::logic_error("intrinsic not in catalog");
}

const HandlerDef* VMDefinition::bytecodeHandlerNamed(const std::string& name) const {
  for (auto& h : bytecodeHandlers)
    if (h->name == name) return h.get();
  return nullptr;
}

const HandlerDef* VMDefinition::primitiveById(int id) const {
  auto it = primitiveHandlers.find(id);
  return it == primitiveHandlers.end() ? nullptr : it->second.get();
}

// ---------------------------------------------------------------------------
// Printer

namespace {

struct Printer {
  std::ostringstream out;

  void expr(const Expr& e) {
    switch (e.kind) {
      case ExprKind::IntConst:
        out << e.intValue;
        break;
      case ExprKind::Var:
        out << e.name;
        break;
      case ExprKind::Call: {
        const IntrinsicInfo& info = intrinsicInfo(e.intrinsic);
        out << "(" << info.name;
        for (auto& a : e.args) {
          out << " ";
          expr(*a);
        }
        out << ")";
        break;
      }
      case ExprKind::HelperCall: {
        out << "(" << e.name;
        for (auto& a : e.args) {
          out << " ";
          expr(*a);
        }
        out << ")";
        break;
      }
      case ExprKind::Checked: {
        const char* name = e.checkedOp == CheckedKind::Add   ? "checkedAdd"
                           : e.checkedOp == CheckedKind::Sub ? "checkedSub"
                                                             : "checkedMul";
        out << "(" << name << " ";
        expr(*e.args[0]);
        out << " ";
        expr(*e.args[1]);
        out << " (onOverflow";
        for (auto& s : e.onOverflow) {
          out << " ";
          stmtInline(*s);
        }
        out << "))";
        break;
      }
      case ExprKind::Stageable:
        out << "(stageable ";
        expr(*e.inner);
        out << ")";
        break;
    }
  }

  // single-line statement form, used inside onOverflow blocks
  void stmtInline(const Stmt& s) {
    switch (s.kind) {
      case StmtKind::ExprStmt:
        expr(*s.expr);
        break;
      case StmtKind::Return:
        out << "(return";
        if (s.expr) {
          out << " ";
          expr(*s.expr);
        }
        out << ")";
        break;
      default:
        throw std::logic_error("unsupported inline statement");
    }
  }

  void indent(int n) {
    for (int i = 0; i < n; i++) out << "  ";
  }

  void stmts(const std::vector<StmtPtr>& list, int depth) {
    for (auto& s : list) {
      out << "\n";
      indent(depth);
      stmt(*s, depth);
    }
  }

  void stmt(const Stmt& s, int depth) {
    switch (s.kind) {
      case StmtKind::Let:
        out << "(let " << s.var << " ";
        expr(*s.expr);
        out << ")";
        break;
      case StmtKind::Assign:
        out << "(set " << s.var << " ";
        expr(*s.expr);
        out << ")";
        break;
      case StmtKind::If:
        out << "(if ";
        expr(*s.expr);
        out << " (then";
        stmts(s.body, depth + 1);
        out << ")";
        if (!s.elseBody.empty()) {
          out << " (else";
          stmts(s.elseBody, depth + 1);
          out << ")";
        }
        out << ")";
        break;
      case StmtKind::While:
        out << "(while ";
        expr(*s.expr);
        stmts(s.body, depth + 1);
        out << ")";
        break;
      case StmtKind::CountedLoop:
        out << "(toDo " << s.var << " ";
        expr(*s.expr);
        out << " ";
        expr(*s.expr2);
        stmts(s.body, depth + 1);
        out << ")";
        break;
      case StmtKind::ExprStmt:
        expr(*s.expr);
        break;
      case StmtKind::Return:
        out << "(return";
        if (s.expr) {
          out << " ";
          expr(*s.expr);
        }
        out << ")";
        break;
      case StmtKind::DruidIgnore:
        out << "(druidIgnore";
        stmts(s.body, depth + 1);
        out << ")";
        break;
      case StmtKind::InterpreterIgnore:
        out << "(interpreterIgnore";
        stmts(s.body, depth + 1);
        out << ")";
        break;
    }
  }

  void annotations(const AnnotationSet& a) {
    std::vector<std::string> items;
    if (a.numberOfArguments)
      items.push_back("(numberOfArguments " + std::to_string(*a.numberOfArguments) + ")");
    if (a.customisedReceiverFor)
      items.push_back("(customisedReceiverFor " + std::to_string(*a.customisedReceiverFor) + ")");
    if (a.isMapped) items.push_back("isMapped");
    if (a.branch) items.push_back("branch");
    if (a.isBranchTrue) items.push_back("isBranchTrue");
    if (a.isBranchFalse) items.push_back("isBranchFalse");
    if (a.hasSend) items.push_back("hasSend");
    if (a.needsFrameNever)
      items.push_back("(needsFrameNever " + std::to_string(*a.needsFrameNever) + ")");
    if (a.druidExitPoint) items.push_back("druidExitPoint");
    if (items.empty()) return;
    out << "\n  (annotations";
    for (auto& i : items) out << " " << i;
    out << ")";
  }
};

}  // namespace

std::string printHandler(const HandlerDef& def) {
  Printer p;
  p.out << "(" << (def.kind == HandlerKind::Bytecode ? "bytecode-handler" : "primitive-handler")
        << " " << def.name;
  p.annotations(def.annotations);
  p.stmts(def.body, 1);
  p.out << ")\n";
  return p.out.str();
}

std::string printHelper(const HelperDef& def) {
  Printer p;
  p.out << "(helper " << def.name << " (params";
  for (auto& param : def.params) p.out << " " << param;
  p.out << ")";
  p.annotations(def.annotations);
  p.stmts(def.body, 1);
  p.out << ")\n";
  return p.out.str();
}

std::string printDefinition(const VMDefinition& def) {
  std::ostringstream out;
  for (auto& [name, h] : def.helpers) out << printHelper(*h) << "\n";
  for (auto& h : def.bytecodeHandlers) out << printHandler(*h) << "\n";
  for (auto& [id, h] : def.primitiveHandlers) out << printHandler(*h) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Parser

namespace {

struct Sexpr {
  bool isAtom = false;
  std::string atom;
  std::vector<Sexpr> items;
  int line = 0;
};

struct SexprParser {
  const std::string& text;
  size_t pos = 0;
  int line = 1;

  explicit SexprParser(const std::string& t) : text(t) {}

  void skipWs() {
    while (pos < text.size()) {
      char c = text[pos];
      if (c == '\n') {
        line++;
        pos++;
      } else if (isspace(uint8_t(c))) {
        pos++;
      } else if (c == ';') {
        while (pos < text.size() && text[pos] != '\n') pos++;
      } else {
        break;
      }
    }
  }

  bool atEnd() {
    skipWs();
    return pos >= text.size();
  }

  Sexpr parse() {
    skipWs();
    if (pos >= text.size())
      throw VmError(ErrorKind::ParseError, "unexpected end of handler listing");
    Sexpr s;
    s.line = line;
    if (text[pos] == '(') {
      pos++;
      while (true) {
        skipWs();
        if (pos >= text.size())
          throw VmError(ErrorKind::ParseError, "unclosed ( at line " + std::to_string(s.line));
        if (text[pos] == ')') {
          pos++;
          return s;
        }
        s.items.push_back(parse());
      }
    }
    if (text[pos] == ')')
      throw VmError(ErrorKind::ParseError, "unexpected ) at line " + std::to_string(line));
    s.isAtom = true;
    size_t start = pos;
    while (pos < text.size() && !isspace(uint8_t(text[pos])) && text[pos] != '(' &&
           text[pos] != ')' && text[pos] != ';')
      pos++;
    s.atom = text.substr(start, pos - start);
    return s;
  }
};

struct AstBuilder {
  [[noreturn]] void fail(const Sexpr& s, const std::string& msg) {
    throw VmError(ErrorKind::ParseError,
                  "handler listing line " + std::to_string(s.line) + ": " + msg);
  }

  bool isInt(const std::string& a) {
    if (a.empty()) return false;
    size_t i = a[0] == '-' ? 1 : 0;
    if (i >= a.size()) return false;
    for (; i < a.size(); i++)
      if (!isdigit(uint8_t(a[i]))) return false;
    return true;
  }

  ExprPtr expr(const Sexpr& s) {
    auto e = std::make_unique<Expr>();
    if (s.isAtom) {
      if (isInt(s.atom)) {
        e->kind = ExprKind::IntConst;
        e->intValue = std::stoll(s.atom);
      } else {
        e->kind = ExprKind::Var;
        e->name = s.atom;
      }
      return e;
    }
    if (s.items.empty() || !s.items[0].isAtom) fail(s, "expected operator");
    const std::string& head = s.items[0].atom;

    if (head == "checkedAdd" || head == "checkedSub" || head == "checkedMul") {
      if (s.items.size() != 4) fail(s, head + " needs lhs, rhs, (onOverflow ...)");
      e->kind = ExprKind::Checked;
      e->checkedOp = head == "checkedAdd"   ? CheckedKind::Add
                     : head == "checkedSub" ? CheckedKind::Sub
                                            : CheckedKind::Mul;
      e->args.push_back(expr(s.items[1]));
      e->args.push_back(expr(s.items[2]));
      const Sexpr& ovf = s.items[3];
      if (ovf.isAtom || ovf.items.empty() || !ovf.items[0].isAtom ||
          ovf.items[0].atom != "onOverflow")
        fail(s, "expected (onOverflow ...)");
      for (size_t i = 1; i < ovf.items.size(); i++)
        e->onOverflow.push_back(stmt(ovf.items[i]));
      return e;
    }
    if (head == "stageable") {
      if (s.items.size() != 2) fail(s, "stageable takes one expression");
      e->kind = ExprKind::Stageable;
      e->inner = expr(s.items[1]);
      return e;
    }
    if (head == kNotName) {
      if (s.items.size() != 2) fail(s, "not takes one condition");
      // represented as (eq COND 0)? No: keep explicit via CmpEq inversion at
      // use sites is messy, so model it as a Call with a dedicated shape:
      // ne(x, x) is wrong. Instead: swap into the condition consumer.
      // We encode (not C) as CmpEq of C against... simplest: wrap in Call
      // with intrinsic CmpEq and a single arg is invalid. Use HelperCall
      // sentinel instead.
      e->kind = ExprKind::HelperCall;
      e->name = kNotName;
      e->args.push_back(expr(s.items[1]));
      return e;
    }
    if (const IntrinsicInfo* info = intrinsicByName(head)) {
      e->kind = ExprKind::Call;
      e->intrinsic = info->id;
      for (size_t i = 1; i < s.items.size(); i++) e->args.push_back(expr(s.items[i]));
      return e;
    }
    // unresolved head: helper call, checked later
    e->kind = ExprKind::HelperCall;
    e->name = head;
    for (size_t i = 1; i < s.items.size(); i++) e->args.push_back(expr(s.items[i]));
    return e;
  }

  StmtPtr stmt(const Sexpr& s) {
    auto st = std::make_unique<Stmt>();
    if (s.isAtom) fail(s, "expected statement");
    if (s.items.empty() || !s.items[0].isAtom) fail(s, "expected statement form");
    const std::string& head = s.items[0].atom;

    if (head == "let" || head == "set") {
      if (s.items.size() != 3 || !s.items[1].isAtom) fail(s, head + " needs name and value");
      st->kind = head == "let" ? StmtKind::Let : StmtKind::Assign;
      st->var = s.items[1].atom;
      st->expr = expr(s.items[2]);
      return st;
    }
    if (head == "if") {
      if (s.items.size() < 3 || s.items.size() > 4) fail(s, "if needs cond, then, [else]");
      st->kind = StmtKind::If;
      st->expr = expr(s.items[1]);
      const Sexpr& thenArm = s.items[2];
      if (thenArm.isAtom || thenArm.items.empty() || thenArm.items[0].atom != "then")
        fail(s, "expected (then ...)");
      for (size_t i = 1; i < thenArm.items.size(); i++)
        st->body.push_back(stmt(thenArm.items[i]));
      if (s.items.size() == 4) {
        const Sexpr& elseArm = s.items[3];
        if (elseArm.isAtom || elseArm.items.empty() || elseArm.items[0].atom != "else")
          fail(s, "expected (else ...)");
        for (size_t i = 1; i < elseArm.items.size(); i++)
          st->elseBody.push_back(stmt(elseArm.items[i]));
      }
      return st;
    }
    if (head == "while") {
      if (s.items.size() < 2) fail(s, "while needs a condition");
      st->kind = StmtKind::While;
      st->expr = expr(s.items[1]);
      for (size_t i = 2; i < s.items.size(); i++) st->body.push_back(stmt(s.items[i]));
      return st;
    }
    if (head == "toDo") {
      if (s.items.size() < 4 || !s.items[1].isAtom) fail(s, "toDo needs var, from, to");
      st->kind = StmtKind::CountedLoop;
      st->var = s.items[1].atom;
      st->expr = expr(s.items[2]);
      st->expr2 = expr(s.items[3]);
      for (size_t i = 4; i < s.items.size(); i++) st->body.push_back(stmt(s.items[i]));
      return st;
    }
    if (head == "return") {
      if (s.items.size() > 2) fail(s, "return takes at most one value");
      st->kind = StmtKind::Return;
      if (s.items.size() == 2) st->expr = expr(s.items[1]);
      return st;
    }
    if (head == "druidIgnore" || head == "interpreterIgnore") {
      st->kind = head == "druidIgnore" ? StmtKind::DruidIgnore : StmtKind::InterpreterIgnore;
      for (size_t i = 1; i < s.items.size(); i++) st->body.push_back(stmt(s.items[i]));
      return st;
    }
    st->kind = StmtKind::ExprStmt;
    st->expr = expr(s);
    return st;
  }

  AnnotationSet annotations(const Sexpr& s) {
    AnnotationSet a;
    for (size_t i = 1; i < s.items.size(); i++) {
      const Sexpr& item = s.items[i];
      if (item.isAtom) {
        const std::string& n = item.atom;
        if (n == "isMapped") a.isMapped = true;
        else if (n == "branch") a.branch = true;
        else if (n == "isBranchTrue") a.isBranchTrue = true;
        else if (n == "isBranchFalse") a.isBranchFalse = true;
        else if (n == "hasSend") a.hasSend = true;
        else if (n == "druidExitPoint") a.druidExitPoint = true;
        else fail(item, "unknown annotation " + n);
      } else {
        if (item.items.size() != 2 || !item.items[0].isAtom || !item.items[1].isAtom)
          fail(item, "bad annotation form");
        const std::string& n = item.items[0].atom;
        int64_t v = std::stoll(item.items[1].atom);
        if (n == "numberOfArguments") a.numberOfArguments = int(v);
        else if (n == "needsFrameNever") a.needsFrameNever = int(v);
        else if (n == "customisedReceiverFor") a.customisedReceiverFor = uint32_t(v);
        else fail(item, "unknown annotation " + n);
      }
    }
    return a;
  }
};

}  // namespace

ParsedDefinition parseHandlerListing(const std::string& text) {
  ParsedDefinition result;
  SexprParser parser(text);
  AstBuilder builder;
  while (!parser.atEnd()) {
    Sexpr top = parser.parse();
    if (top.isAtom || top.items.empty() || !top.items[0].isAtom)
      builder.fail(top, "expected a handler or helper form");
    const std::string& head = top.items[0].atom;
    if (head == "bytecode-handler" || head == "primitive-handler") {
      if (top.items.size() < 2 || !top.items[1].isAtom)
        builder.fail(top, "handler needs a name");
      auto def = std::make_unique<HandlerDef>();
      def->name = top.items[1].atom;
      def->kind = head[0] == 'b' ? HandlerKind::Bytecode : HandlerKind::Primitive;
      size_t i = 2;
      if (i < top.items.size() && !top.items[i].isAtom && !top.items[i].items.empty() &&
          top.items[i].items[0].isAtom && top.items[i].items[0].atom == "annotations") {
        def->annotations = builder.annotations(top.items[i]);
        i++;
      }
      for (; i < top.items.size(); i++) def->body.push_back(builder.stmt(top.items[i]));
      result.handlers.push_back(std::move(def));
    } else if (head == "helper") {
      if (top.items.size() < 3 || !top.items[1].isAtom)
        builder.fail(top, "helper needs a name and params");
      auto def = std::make_unique<HelperDef>();
      def->name = top.items[1].atom;
      const Sexpr& params = top.items[2];
      if (params.isAtom || params.items.empty() || params.items[0].atom != "params")
        builder.fail(top, "expected (params ...)");
      for (size_t i = 1; i < params.items.size(); i++) {
        if (!params.items[i].isAtom) builder.fail(params, "bad param");
        def->params.push_back(params.items[i].atom);
      }
      size_t i = 3;
      if (i < top.items.size() && !top.items[i].isAtom && !top.items[i].items.empty() &&
          top.items[i].items[0].isAtom && top.items[i].items[0].atom == "annotations") {
        def->annotations = builder.annotations(top.items[i]);
        i++;
      }
      for (; i < top.items.size(); i++) def->body.push_back(builder.stmt(top.items[i]));
      result.helpers.push_back(std::move(def));
    } else {
      builder.fail(top, "unknown top-level form " + head);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

struct Validator {
  Validator(const std::map<std::string, std::unique_ptr<HelperDef>>& h,
            std::vector<Diagnostic>& d)
      : helpers(h), diags(d) {}

  const std::map<std::string, std::unique_ptr<HelperDef>>& helpers;
  std::vector<Diagnostic>& diags;
  bool isPrimitive = false;
  bool isHelper = false;
  std::map<std::string, int> locals;
  int nextSlot = 0;
  int fetchByteCount = 0;

  void report(const std::string& path, const std::string& msg) {
    diags.push_back({path, msg});
  }

  int defineVar(const std::string& path, const std::string& name) {
    auto it = locals.find(name);
    if (it != locals.end()) {
      report(path, "variable '" + name + "' already defined");
      return it->second;
    }
    locals[name] = nextSlot;
    return nextSlot++;
  }

  bool isNot(const Expr& e) {
    return e.kind == ExprKind::HelperCall && e.name == kNotName;
  }

  bool isCondition(const Expr& e) {
    if (isNot(e)) return e.args.size() == 1 && isCondition(*e.args[0]);
    return e.kind == ExprKind::Call && isComparison(e.intrinsic);
  }

  void checkExpr(Expr& e, const std::string& path, bool conditionPosition) {
    switch (e.kind) {
      case ExprKind::IntConst:
        break;
      case ExprKind::Var: {
        auto it = locals.find(e.name);
        if (it == locals.end())
          report(path, "undefined variable '" + e.name + "'");
        else
          e.varSlot = it->second;
        break;
      }
      case ExprKind::Call: {
        const IntrinsicInfo& info = intrinsicInfo(e.intrinsic);
        if (int(e.args.size()) != info.arity)
          report(path, std::string(info.name) + " expects " + std::to_string(info.arity) +
                           " arguments");
        if (isComparison(e.intrinsic) && !conditionPosition)
          report(path, std::string(info.name) + " is only valid as a condition");
        bool childCond = e.intrinsic == Intrinsic::BooleanCheat;
        for (size_t i = 0; i < e.args.size(); i++)
          checkExpr(*e.args[i], path + ".arg[" + std::to_string(i) + "]", childCond);
        checkPlacement(e.intrinsic, path);
        break;
      }
      case ExprKind::HelperCall: {
        if (isNot(e)) {
          if (!conditionPosition) report(path, "not is only valid as a condition");
          if (e.args.size() == 1) checkExpr(*e.args[0], path + ".arg[0]", true);
          else report(path, "not takes one condition");
          break;
        }
        auto it = helpers.find(e.name);
        if (it == helpers.end()) {
          report(path, "unresolved call target '" + e.name + "'");
        } else if (it->second->params.size() != e.args.size()) {
          report(path, "helper '" + e.name + "' expects " +
                           std::to_string(it->second->params.size()) + " arguments");
        }
        for (size_t i = 0; i < e.args.size(); i++)
          checkExpr(*e.args[i], path + ".arg[" + std::to_string(i) + "]", false);
        break;
      }
      case ExprKind::Checked: {
        if (isHelper) report(path, "checked arithmetic not allowed in helpers");
        checkExpr(*e.args[0], path + ".lhs", false);
        checkExpr(*e.args[1], path + ".rhs", false);
        bool terminated = checkBlock(e.onOverflow, path + ".onOverflow");
        if (!terminated)
          report(path, "onOverflow block must end in a terminator");
        break;
      }
      case ExprKind::Stageable:
        checkExpr(*e.inner, path + ".stageable", false);
        break;
    }
  }

  void checkPlacement(Intrinsic id, const std::string& path) {
    bool bytecodeOnly = false, primitiveOnly = false, handlerOnly = false;
    switch (id) {
      case Intrinsic::FetchNextBytecode: case Intrinsic::JumpBy:
      case Intrinsic::SendSpecial: case Intrinsic::SendLiteral:
      case Intrinsic::CommonReturn: case Intrinsic::BooleanCheat:
      case Intrinsic::ForceInterpretation: case Intrinsic::FetchByte:
      case Intrinsic::Push: case Intrinsic::Pop: case Intrinsic::StackTop:
      case Intrinsic::MustBeBoolean: case Intrinsic::TempAt: case Intrinsic::TempAtPut:
        bytecodeOnly = true;
        break;
      case Intrinsic::PrimitiveFail: case Intrinsic::PopThenPush:
        primitiveOnly = true;
        break;
      case Intrinsic::StackValue: case Intrinsic::Receiver:
        handlerOnly = true;
        break;
      default:
        break;
    }
    if (bytecodeOnly && (isPrimitive || isHelper))
      report(path, intrinsicInfo(id).name + std::string(" only valid in bytecode handlers"));
    if (primitiveOnly && (!isPrimitive || isHelper))
      report(path, intrinsicInfo(id).name + std::string(" only valid in primitive handlers"));
    if (handlerOnly && isHelper)
      report(path, intrinsicInfo(id).name + std::string(" not valid in helpers"));
  }

  bool isTerminatorExpr(const Expr& e) {
    if (e.kind != ExprKind::Call) return false;
    switch (e.intrinsic) {
      case Intrinsic::FetchNextBytecode: case Intrinsic::JumpBy:
      case Intrinsic::SendSpecial: case Intrinsic::SendLiteral:
      case Intrinsic::CommonReturn: case Intrinsic::BooleanCheat:
        return !isPrimitive;
      case Intrinsic::PrimitiveFail: case Intrinsic::PopThenPush:
        return isPrimitive;
      default:
        return false;
    }
  }

  // Returns true when every path through the block reaches a terminator.
  bool checkBlock(std::vector<StmtPtr>& list, const std::string& path) {
    bool terminated = false;
    for (size_t i = 0; i < list.size(); i++) {
      std::string p = path + "[" + std::to_string(i) + "]";
      if (terminated) {
        report(p, "unreachable statement after terminator");
        break;
      }
      terminated = checkStmt(*list[i], p);
    }
    return terminated;
  }

  bool checkStmt(Stmt& s, const std::string& path) {
    switch (s.kind) {
      case StmtKind::Let:
        checkExpr(*s.expr, path + ".value", false);
        s.varSlot = defineVar(path, s.var);
        return false;
      case StmtKind::Assign: {
        checkExpr(*s.expr, path + ".value", false);
        auto it = locals.find(s.var);
        if (it == locals.end())
          report(path, "assignment to undefined variable '" + s.var + "'");
        else
          s.varSlot = it->second;
        return false;
      }
      case StmtKind::If: {
        if (!isCondition(*s.expr))
          report(path + ".cond", "if condition must be a comparison");
        checkExpr(*s.expr, path + ".cond", true);
        bool thenTerm = checkBlock(s.body, path + ".then");
        bool elseTerm = !s.elseBody.empty() && checkBlock(s.elseBody, path + ".else");
        return thenTerm && elseTerm && !s.elseBody.empty();
      }
      case StmtKind::While:
        if (!isCondition(*s.expr))
          report(path + ".cond", "while condition must be a comparison");
        checkExpr(*s.expr, path + ".cond", true);
        if (checkBlock(s.body, path + ".body"))
          report(path, "loop body must not terminate the handler");
        return false;
      case StmtKind::CountedLoop: {
        checkExpr(*s.expr, path + ".from", false);
        checkExpr(*s.expr2, path + ".to", false);
        auto saved = locals.count(s.var) ? std::optional<int>(locals[s.var]) : std::nullopt;
        if (!saved) s.varSlot = defineVar(path, s.var);
        else s.varSlot = *saved;
        if (checkBlock(s.body, path + ".body"))
          report(path, "loop body must not terminate the handler");
        return false;
      }
      case StmtKind::ExprStmt:
        checkExpr(*s.expr, path, false);
        return isTerminatorExpr(*s.expr);
      case StmtKind::Return:
        if (!isHelper) {
          report(path, "return is only valid in helpers");
          return true;
        }
        if (s.expr) checkExpr(*s.expr, path + ".value", false);
        return true;
      case StmtKind::DruidIgnore:
        checkBlock(s.body, path + ".druidIgnore");
        return false;  // continues when the fast path falls through
      case StmtKind::InterpreterIgnore: {
        for (size_t i = 0; i < s.body.size(); i++) {
          Stmt& inner = *s.body[i];
          std::string p = path + ".interpreterIgnore[" + std::to_string(i) + "]";
          if (inner.kind != StmtKind::Let && inner.kind != StmtKind::ExprStmt) {
            report(p, "interpreterIgnore allows only pure expressions and stack reads");
            continue;
          }
          if (!isPureOrStackRead(*inner.expr))
            report(p, "interpreterIgnore allows only pure expressions and stack reads");
          checkStmt(inner, p);
        }
        return false;
      }
    }
    return false;
  }

  bool isPureOrStackRead(const Expr& e) {
    switch (e.kind) {
      case ExprKind::IntConst:
      case ExprKind::Var:
        return true;
      case ExprKind::Call: {
        EffectClass ec = intrinsicInfo(e.intrinsic).effect;
        bool ok = ec == EffectClass::Pure || e.intrinsic == Intrinsic::StackTop ||
                  e.intrinsic == Intrinsic::StackValue;
        if (!ok) return false;
        for (auto& a : e.args)
          if (!isPureOrStackRead(*a)) return false;
        return true;
      }
      default:
        return false;
    }
  }
};

void checkAnnotationPlacement(const HandlerDef& def, std::vector<Diagnostic>& diags) {
  const AnnotationSet& a = def.annotations;
  bool isBytecode = def.kind == HandlerKind::Bytecode;
  auto bad = [&](const std::string& name, const std::string& where) {
    diags.push_back({"annotations", "misplaced annotation " + name + " (only valid on " +
                                        where + " handlers)"});
  };
  if (isBytecode) {
    if (a.numberOfArguments) bad("numberOfArguments", "primitive");
    if (a.customisedReceiverFor) bad("customisedReceiverFor", "primitive");
    if (a.druidExitPoint) bad("druidExitPoint", "primitive");
  } else {
    if (a.isMapped) bad("isMapped", "bytecode");
    if (a.branch) bad("branch", "bytecode");
    if (a.isBranchTrue) bad("isBranchTrue", "bytecode");
    if (a.isBranchFalse) bad("isBranchFalse", "bytecode");
    if (a.hasSend) bad("hasSend", "bytecode");
    if (a.needsFrameNever) bad("needsFrameNever", "bytecode");
  }
  if (a.isBranchTrue && a.isBranchFalse)
    diags.push_back({"annotations", "isBranchTrue and isBranchFalse are exclusive"});
}

void collectHelpersUsed(const Expr& e, std::vector<std::string>& out) {
  if (e.kind == ExprKind::HelperCall && e.name != kNotName) {
    bool seen = false;
    for (auto& n : out) seen |= (n == e.name);
    if (!seen) out.push_back(e.name);
  }
  for (auto& a : e.args) collectHelpersUsed(*a, out);
  if (e.inner) collectHelpersUsed(*e.inner, out);
  for (auto& s : e.onOverflow) {
    if (s->expr) collectHelpersUsed(*s->expr, out);
  }
}

void collectHelpersUsedStmts(const std::vector<StmtPtr>& list, std::vector<std::string>& out) {
  for (auto& s : list) {
    if (s->expr) collectHelpersUsed(*s->expr, out);
    if (s->expr2) collectHelpersUsed(*s->expr2, out);
    collectHelpersUsedStmts(s->body, out);
    collectHelpersUsedStmts(s->elseBody, out);
  }
}

}  // namespace

std::vector<Diagnostic> validateHandler(
    const HandlerDef& def, const std::map<std::string, std::unique_ptr<HelperDef>>& helpers) {
  std::vector<Diagnostic> diags;
  checkAnnotationPlacement(def, diags);
  Validator v{helpers, diags};
  v.isPrimitive = def.kind == HandlerKind::Primitive;
  HandlerDef& mut = const_cast<HandlerDef&>(def);
  bool terminated = v.checkBlock(mut.body, "body");
  if (!terminated)
    diags.push_back({"body", "a path falls off the end of the handler without a terminator"});
  mut.localCount = v.nextSlot;
  mut.helpersUsed.clear();
  collectHelpersUsedStmts(mut.body, mut.helpersUsed);
  if (def.kind == HandlerKind::Primitive && !def.annotations.numberOfArguments)
    diags.push_back({"annotations", "primitive handler missing numberOfArguments"});
  return diags;
}

static std::vector<Diagnostic> validateHelper(
    const HelperDef& def, const std::map<std::string, std::unique_ptr<HelperDef>>& helpers) {
  std::vector<Diagnostic> diags;
  Validator v{helpers, diags};
  v.isHelper = true;
  HelperDef& mut = const_cast<HelperDef&>(def);
  for (auto& p : def.params) v.defineVar("params", p);
  bool terminated = true;
  // Helpers must return a value on every path; reuse the block checker with
  // Return as the only terminator.
  struct HelperCheck {
    Validator& v;
    bool block(std::vector<StmtPtr>& list, const std::string& path) {
      bool term = false;
      for (size_t i = 0; i < list.size(); i++) {
        std::string p = path + "[" + std::to_string(i) + "]";
        if (term) {
          v.report(p, "unreachable statement after return");
          break;
        }
        Stmt& s = *list[i];
        if (s.kind == StmtKind::Return) {
          if (!s.expr) v.report(p, "helper return needs a value");
          else v.checkExpr(*s.expr, p + ".value", false);
          term = true;
        } else {
          term = v.checkStmt(s, p);
        }
      }
      return term;
    }
  } hc{v};
  terminated = hc.block(mut.body, "body");
  if (!terminated)
    diags.push_back({"body", "a path falls off the end of the helper without a return"});
  mut.localCount = v.nextSlot;
  return diags;
}

std::vector<Diagnostic> validateDefinition(const VMDefinition& def) {
  std::vector<Diagnostic> diags;
  auto absorb = [&](const std::string& who, std::vector<Diagnostic> d) {
    for (auto& x : d) diags.push_back({who + "." + x.path, x.message});
  };
  std::map<std::string, int> helperUses;
  for (auto& [name, h] : def.helpers) {
    absorb("helper " + name, validateHelper(*h, def.helpers));
    helperUses[name] = 0;
  }
  auto countUses = [&](const HandlerDef& h) {
    for (auto& used : h.helpersUsed) {
      auto it = helperUses.find(used);
      if (it != helperUses.end()) it->second++;
    }
  };
  for (auto& h : def.bytecodeHandlers) {
    absorb(h->name, validateHandler(*h, def.helpers));
    countUses(*h);
  }
  for (auto& [id, h] : def.primitiveHandlers) {
    absorb(h->name, validateHandler(*h, def.helpers));
    countUses(*h);
  }
  // helpers may call helpers
  for (auto& [name, h] : def.helpers) {
    std::vector<std::string> used;
    collectHelpersUsedStmts(h->body, used);
    for (auto& u : used) {
      if (u == name) diags.push_back({"helper " + name, "recursive helper"});
      auto it = helperUses.find(u);
      if (it != helperUses.end()) it->second++;
    }
  }
  for (auto& [name, uses] : helperUses)
    if (uses == 0) diags.push_back({"helper " + name, "helper is never called"});
  // table totality
  for (int op = 0; op < 256; op++) {
    const TableEntry& e = def.table[op];
    if (!e.handlerName.empty() && e.handler == nullptr)
      diags.push_back({"table", "opcode " + std::to_string(op) + " names a missing handler"});
  }
  return diags;
}

}  // namespace druidlet
