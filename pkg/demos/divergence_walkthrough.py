"""Walk through answer divergence on hand-built rollout distributions.

Shows how raw model responses become smoothed answer distributions, how the
reverse-KL divergence separates zero-delta from delta prompts, and what the
pool-level summary looks like.

Run: python3 demos/divergence_walkthrough.py
"""

from promptgap import (
    AnswerDistribution,
    answer_divergence,
    extract_answer,
    group_answers_exact,
    laplace_smooth,
    measure,
    pool_statistics,
)

# --- 1. From raw responses to a distribution -------------------------------

responses = [
    "The bars sum to 510, but wait... Final Answer: 512",
    "Counting again carefully. **Final Answer** 512.",
    "I compute 484 from the legend. Final Answer: 484",
    "I cannot read the axis labels at all.",
]
answers = [extract_answer(r) for r in responses]
print("extracted answers:", answers)

dist = group_answers_exact(answers)
print("grouped:", dist.groups, "| unextracted:", dist.unextracted)

# --- 2. Divergence between a teacher and a student -------------------------

teacher = AnswerDistribution(groups={"512": 8, "484": 8})
student = AnswerDistribution(groups={"512": 16})

support, s_probs, t_probs = laplace_smooth(student, teacher)
print("\nunion support:", support)
print("student probs:", s_probs.round(4))
print("teacher probs:", t_probs.round(4))

delta = answer_divergence(student, teacher)
print(f"divergence: {delta:.6f} nats  (student is over-confident on 512)")

agree = AnswerDistribution(groups={"512": 16})
print(f"identical distributions: {answer_divergence(agree, agree):.6f} nats")

# --- 3. Classifying a pool of prompts --------------------------------------

records = []
for i in range(69):  # prompts where both models already agree
    records.append(measure(f"agree-{i}",
                           AnswerDistribution(groups={"7": 16}),
                           AnswerDistribution(groups={"7": 16})))
for i in range(31):  # prompts exposing a real capability gap
    records.append(measure(f"gap-{i}",
                           AnswerDistribution(groups={"7": 12, "9": 4}),
                           AnswerDistribution(groups={"9": 16})))

stats = pool_statistics(records)
print()
print(stats.render())
