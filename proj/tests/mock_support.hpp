#pragma once

#include <random>

#include "druidlet/midend.hpp"
#include "druidlet/object_model.hpp"

namespace druidlet::testing {

// A mock state valid for any builtin handler: a deep enough operand stack,
// a receiver with sixteen slots, a full temp frame, literals, and scripted
// send results.
inline MockState randomMockState(std::mt19937_64& rng, const HandlerDef* prim = nullptr) {
  MockState st;
  auto smi = [&]() { return int64_t(tagSmallInt(int64_t(rng() % 2001) - 1000).word); };
  int64_t rcvrObj = st.allocate(kClassArray, 16);
  for (int i = 0; i < 16; i++) st.heap[rcvrObj].slots[size_t(i)] = smi();
  int64_t smallArray = st.allocate(kClassArray, 4);

  for (int i = 0; i < 10; i++) {
    uint64_t pick = rng() % 8;
    if (pick < 5) st.stack.push_back(smi());
    else if (pick == 5) st.stack.push_back(int64_t(kTrueRef));
    else if (pick == 6) st.stack.push_back(int64_t(kFalseRef));
    else st.stack.push_back(smallArray);
  }
  st.receiver = rcvrObj;
  st.temps.resize(32);
  for (auto& t : st.temps) t = smi();
  st.bytecodePc = int64_t(rng() % 200);
  st.operandBytes[0] = uint8_t(rng());
  st.operandBytes[1] = uint8_t(rng());
  st.methodSlots.assign(kLiteralStart + 16, 0);
  for (int i = 0; i < 16; i++)
    st.methodSlots[size_t(kLiteralStart + i)] =
        int64_t(tagSmallInt(int64_t(rng() % 500)).word);
  for (int i = 0; i < 6; i++) st.sendResults.push_back(smi());

  if (prim) {
    int numArgs = prim->annotations.numberOfArguments.value_or(0);
    uint32_t guard = prim->annotations.customisedReceiverFor.value_or(kClassArray);
    // the receiver honors the install-class guard; arguments are unconstrained
    if (prim->annotations.customisedReceiverFor && guard == kClassSmallInteger)
      st.receiver = smi();
    else if (prim->annotations.customisedReceiverFor && guard == kClassArray)
      st.receiver = smallArray;
    else
      st.receiver = (rng() % 3 == 0) ? smi() : ((rng() % 2) ? smallArray : int64_t(kNilRef));
    st.args.clear();
    for (int i = 0; i < numArgs; i++) {
      uint64_t pick = rng() % 8;
      if (pick < 6) st.args.push_back(smi());
      else if (pick == 6) st.args.push_back(smallArray);
      else st.args.push_back(int64_t(kNilRef));
    }
  }
  return st;
}

}  // namespace druidlet::testing
