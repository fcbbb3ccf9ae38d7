#pragma once

#include "kpc/ab_lstm.hpp"
#include "kpc/char_cnn.hpp"
#include "kpc/corpus.hpp"
#include "kpc/embeddings.hpp"
#include "kpc/ensemble.hpp"
#include "kpc/error.hpp"
#include "kpc/evaluation.hpp"
#include "kpc/hyperparams.hpp"
#include "kpc/label.hpp"
#include "kpc/mlp.hpp"
#include "kpc/model.hpp"
#include "kpc/nn.hpp"
#include "kpc/pipeline.hpp"
#include "kpc/predictions.hpp"
#include "kpc/random.hpp"
#include "kpc/stacker.hpp"
#include "kpc/text_window.hpp"
#include "kpc/trees.hpp"
#include "kpc/utf8.hpp"
