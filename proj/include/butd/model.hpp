#pragma once

#include "butd/datasets.hpp"
#include "butd/graph.hpp"

namespace butd {

enum class LateralMode { none, additive, multiplicative, gated };
enum class Backbone { lenet_like, resnet18_like };
enum class InstructionWiring {
    td_top,    // instruction embedded into the TD top layer (counter-streams)
    readout,   // instruction wired into the final task head only (unguided)
    input_map, // instruction embedded to an image-sized map at the input
    none,
};
enum class TopCombine { sum, concat_project };

struct StageSpec {
    int channels = 8;
    int stride = 2;
    int blocks = 1; // 1 = single conv, >1 = residual basic blocks
};

struct ModelSpec {
    Backbone preset = Backbone::lenet_like;
    float width_mult = 1.0f;
    std::vector<StageSpec> stages; // derived from the preset when empty
    int stem_channels = 0;         // preset default when 0

    int in_h = 56, in_w = 56;
    int image_channels = 1;
    int aux_channels = 0;

    int task_vocab = 1;
    int arg_vocab = 1;
    int arg2_vocab = 0;
    int occurrence_vocab = 0;
    int answer_vocab = 2;
    int head_hidden = 64;
    int top_dim = 0; // dimension of L^T; defaults to the last stage width

    InstructionWiring wiring = InstructionWiring::td_top;
    TopCombine top_combine = TopCombine::sum;
    LateralMode bu2td = LateralMode::additive;
    LateralMode td2bu = LateralMode::gated;
    bool td2bu_bottom_only = false; // ablation: keep only the lowest TD->BU lateral
    bool counterstream = true;      // false: sequential BU-TD-BU stack, no laterals
    bool share_bu_weights = true;
    bool bu_only = false;           // single BU pass with the task head (baseline nets)

    bool seg_head = false;
    bool loc_head = false;

    uint64_t init_seed = 1;
};

// node ids of one BU-TD-BU cycle inside a Graph
struct CycleNodes {
    int occurrence_logits = -1;
    int seg_logits = -1; // (1,H,W), pre-sigmoid
    int task_logits = -1;
    int loc_xy = -1; // (2), sigmoid applied
    int embed_task = -1, embed_arg = -1;
    int bu1_top = -1, bu2_top = -1; // pooled feature vectors
    std::vector<int> bu1_acts, td_acts, bu2_acts;
};

class CounterStreamModel {
public:
    static CounterStreamModel build(const ModelSpec& spec);

    // full unfolded cycle BU1 -> TD -> BU2 on one input
    CycleNodes run_cycle(Graph& g, const Tensor& input, const Instruction& instr) const;

    // n instructions: n+1 BU passes and n TD passes; output t couples
    // BU pass t (occurrence), TD pass t (segmentation) and BU pass t+1 (task)
    std::vector<CycleNodes> run_multicycle(Graph& g, const Tensor& input,
                                           const std::vector<Instruction>& instrs) const;

    // BU stack alone with the task head, no lateral input anywhere
    int plain_forward_logits(Graph& g, const Tensor& input) const;

    // instruction embedding through the learned matrices (E = M * I)
    std::pair<int, int> embed_instruction(Graph& g, const Instruction& instr) const;
    Tensor embed_task_vector(const Instruction& instr) const; // convenience, no graph

    // assembles image + aux-map channels (+ embedded input map when wired)
    Tensor make_input(const Image& img, const std::vector<Mask>& aux) const;
    Tensor make_input(const Tensor& image_chw, const std::vector<Mask>& aux) const;

    int top_dim() const { return top_dim_; }
    int bu_layer_count() const { return bu_layers_; }
    int td_layer_count() const { return td_layers_; }
    const ModelSpec& spec() const { return spec_; }

    ParamStore params;

    // names of parameters that exist solely to wire the instruction into a
    // variant (excluded from variant-parity comparisons)
    std::vector<std::string> instruction_wiring_params() const;

private:
    struct Level {
        int channels = 0, h = 0, w = 0;
    };
    ModelSpec spec_;
    std::vector<Level> levels_; // 0 = stem output, levels_.back() = top
    int top_dim_ = 0;
    int bu_layers_ = 0, td_layers_ = 0;

    int bu_pass(Graph& g, int input_node, const std::vector<int>* td_lateral_acts,
                std::vector<int>& acts_out, const char* prefix_bu2) const;
    std::vector<int> td_pass(Graph& g, int top_vec, const std::vector<int>& bu_acts) const;
    int lateral(Graph& g, int stream_act, int counter_act, LateralMode mode,
                const std::string& name) const;
    friend int lateral_inject_node(const CounterStreamModel&, Graph&, int, int, LateralMode,
                                   const std::string&);
};

// the S2 lateral combination on already-projected inputs; exposed for tests
Tensor lateral_formula(const Tensor& stream, const Tensor& projected, LateralMode mode, float alpha);

} // namespace butd
