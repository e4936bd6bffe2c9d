#pragma once

#include "qclass/balance.hpp"
#include "qclass/cnn.hpp"
#include "qclass/config.hpp"
#include "qclass/container.hpp"
#include "qclass/corpus.hpp"
#include "qclass/embedding.hpp"
#include "qclass/error.hpp"
#include "qclass/eval.hpp"
#include "qclass/gradcheck.hpp"
#include "qclass/metrics.hpp"
#include "qclass/pipeline.hpp"
#include "qclass/preprocess.hpp"
#include "qclass/random.hpp"
#include "qclass/sgd_linear.hpp"
#include "qclass/synthetic.hpp"
#include "qclass/tfidf.hpp"
