#pragma once

#include <string>
#include <vector>

#include "rsm/prng.hpp"
#include "rsm/tensor.hpp"

namespace rsm {

// Symbols of the (embedded) Reber grammar, in one-hot index order.
enum ReberSymbol : int { kB = 0, kT = 1, kP = 2, kS = 3, kX = 4, kV = 5, kE = 6 };
constexpr int kReberSymbolCount = 7;
char reber_char(int symbol);
int reber_index(char symbol);   // -1 for unknown

// The embedded Reber grammar: B, a T/P fork, a full inner Reber string,
// the fork symbol again, then E. Deterministic as an automaton, stochastic
// as a generator (every binary choice is 50/50).
class ReberGrammar {
public:
    // One embedded string as symbol indices (starts with B, ends with E).
    std::vector<int> sample(Prng& rng) const;

    // DFA membership test for embedded strings.
    bool accepts(const std::vector<int>& symbols) const;

    // Incremental walker exposing the legal next-symbol set after a prefix.
    class Walker {
    public:
        Walker() { reset(); }
        void reset();
        // Legal next symbols from the current position (1 or 2 entries).
        std::vector<int> legal() const;
        // Consume one symbol; returns false (and dies) on an illegal symbol.
        bool feed(int symbol);
        bool done() const { return state_ == kDone; }
        bool dead() const { return state_ == kDead; }
        // True when the next symbol to come is the closing fork.
        bool at_final_fork() const { return state_ == kCloseFork; }

    private:
        enum State {
            kStart, kOuterFork, kInnerStart,
            kInner1, kInner2, kInner3, kInner4, kInner5, kInner6,
            kCloseFork, kFinal, kDone, kDead,
        };
        State state_ = kStart;
        int fork_ = -1;
        friend class ReberGrammar;
    };
};

// One-hot encode a symbol index into a length-7 row of `dst` at `row`.
void reber_one_hot(Tensor& dst, int row, int symbol);

std::string reber_string(const std::vector<int>& symbols);

// Next-symbol predictor interface used by the sequence-level evaluation.
struct SequencePredictor {
    virtual ~SequencePredictor() = default;
    virtual void reset() = 0;
    // Consume one symbol, return the distribution over the next symbol.
    virtual std::vector<float> feed(int symbol) = 0;
};

struct ErgEvalResult {
    double sequence_accuracy = 0.0;
    double final_fork_accuracy = 0.0;
    int sequences = 0;
};

// A sequence counts as correct iff at every step the set of symbols whose
// predicted probability exceeds 0.5/|legal| equals the grammar-legal set.
// The final-fork transition is additionally scored on its own.
ErgEvalResult erg_evaluate(SequencePredictor& model, int n_sequences, Prng& rng,
                           bool reset_between_sequences = false);

} // namespace rsm
