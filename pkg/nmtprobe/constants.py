# reserved vocabulary indices
PAD = 0
UNK = 1
BOS = 2
EOS = 3
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
BOS_TOKEN = "<s>"
EOS_TOKEN = "</s>"
RESERVED_TOKENS = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN]

DEFAULT_VOCAB_SIZE = 75000
MAX_TRAIN_LEN = 50

# label schemes
TWO_WAY_LABELS = ["entailed", "not_entailed"]
THREE_WAY_LABELS = ["entailment", "neutral", "contradiction"]

# NLI TSV columns
NLI_REQUIRED_COLUMNS = ["context", "hypothesis", "label"]
NLI_META_COLUMNS = ["attribute", "tag_match", "genre", "split"]
TAG_MATCH_VALUES = ["same", "different"]
SPLITS = ["train", "dev", "test"]

# binary containers
CHECKPOINT_MAGIC = b"SPRB1"
DUMP_MAGIC = b"SPRR1"
SCHEME_TAGS = {"concat_last": 0, "maxpool": 1}

# initialization
FORGET_BIAS = 1.0

# optimizers
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# gradient checking
GRADCHECK_EPS = 1e-5
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_FLOOR = 1e-5

# NMT recipe
NMT_LEARNING_RATE = 1.0
NMT_LR_DECAY = 0.5
NMT_CLIP_NORM = 5.0
NMT_BATCH_SIZE = 64
NMT_EVAL_EVERY = 500
NMT_PATIENCE = 3
NMT_MAX_STEPS = 100000

# probe recipe
PROBE_HIDDEN_SIZE = 500
PROBE_LEARNING_RATE = 1e-3
PROBE_BATCH_SIZE = 64
PROBE_MAX_EPOCHS = 100
PROBE_PATIENCE = 5

# reporting
REPORT_SCHEMA_VERSION = 1
LENGTH_BUCKET_WIDTH = 10
LENGTH_BUCKET_MAX_EDGE = 80
LONG_SENTENCE_THRESHOLD = 50
SCHEME_MISMATCH = "scheme mismatch"

# profiles: d, layers, vocabulary size
PROFILES_TABLE = {
    "desk": {"d": 16, "layers": 2, "vocab_size": 2000},
    "paper": {"d": 500, "layers": 4, "vocab_size": DEFAULT_VOCAB_SIZE},
}

# design decisions echoed into every structured report
DESIGN_FLAGS = {
    "dev_selection_metric": "perplexity",
    "probe_selection": "train on train, select on dev accuracy",
    "backward_last_state": "backward RNN state at token position 1",
    "representation_states": "hidden (h), top encoder layer",
    "attention": "additive with input feeding",
    "vocabularies": "separate source and target",
    "relu_grad_at_zero": "0",
    "tokenization": "whitespace, pre-tokenized input",
    "three_way_cells": "reported in the multi-test table",
}
