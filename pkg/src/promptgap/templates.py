"""Prompt templates for generation, skill extraction and judge grouping.

Templates are rendered with ``str.format``; literal braces are escaped.
"""

SEED_GENERATION_TEMPLATES = {
    "chart": (
        "A problem for the first image:\n"
        "{reference_question}\n"
        "\n"
        "Above are two images. For the first image, I have given you a reasoning problem "
        "that asks about the image. Your task is to create a harder problem for the second image.\n"
        "- Do not just copy the problem verbatim from the example, and try to be creative.\n"
        "- The new problem should be about the second image, and it should be similar in "
        "complexity or harder than the given problem.\n"
        "- Make sure your problem leads to an objective answer without any subjectivity.\n"
        "- It would be great if you could create a more natural problem that incorporates "
        "various reasoning skills in a meaningful way, rather than artificially asking for them.\n"
        "- Try to solve your problem to make sure that it is not ill-defined, ambiguous, or unsolvable.\n"
        "- Do not specifically refer to the second image as second image in your question---"
        "the students will only be given one image. Just call it an image.\n"
        "- Do not leak the problem-relevant information in your question statement, when it "
        "can be inferred from the image.\n"
        "- Answer in English.\n"
        "\n"
        "Only output the final hard problem of yours and nothing else. Your output should be "
        "formatted as: Final Problem: your hard problem."
    ),
    "perception": (
        "A problem for the first image:\n"
        "{reference_question}\n"
        "\n"
        "Above are two images. For the first image, I have given you a reasoning problem "
        "that asks about the image. Your task is to create a harder problem for the second image.\n"
        "- Do not just copy the problem verbatim from the example, and try to be creative.\n"
        "- The new problem should be about the second image, and it should be similar in "
        "complexity or harder than the given problem.\n"
        "- Make sure your problem leads to an objective answer without any subjectivity.\n"
        "- It would be great if you could create a more natural problem that incorporates "
        "various reasoning skills in a meaningful way, rather than artificially asking for them. "
        "You are encouraged to focus on hard-to-find small details in the second image when "
        "creating the problem.\n"
        "- Try to solve your problem to make sure that it is not ill-defined, ambiguous, or unsolvable.\n"
        "- Do not specifically refer to the second image as second image in your question---"
        "the students will only be given one image. Just call it an image.\n"
        "- Do not leak the problem-relevant information in your question statement, when it "
        "can be inferred from the image.\n"
        "- Answer in English.\n"
        "\n"
        "Only output the final hard problem of yours and nothing else. Your output should be "
        "formatted as: Final Problem: your hard problem."
    ),
}

SKILL_GENERATION_TEMPLATE = (
    "A problem for the first image:\n"
    "{reference_question}\n"
    "\n"
    "Above are two images. For the first image, I have given you a reasoning problem "
    "that asks about the image. Your task is to create a harder problem for the second image.\n"
    "\n"
    "### Target Reasoning Skills\n"
    "Your problem should require one or more of the following reasoning skills:\n"
    "{skills_block}\n"
    "\n"
    "### Requirements\n"
    "- Do not just copy the problem verbatim from the example, and try to be creative.\n"
    "- The new problem should be about the second image, and it should be similar in "
    "complexity or harder than the given problem.\n"
    "- Make sure your problem leads to an objective answer without any subjectivity.\n"
    "- It would be great if you could create a more natural problem that incorporates "
    "various reasoning skills in a meaningful way, rather than artificially asking for them.\n"
    "- Try to solve your problem to make sure that it is not ill-defined, ambiguous, or unsolvable.\n"
    "- Do not specifically refer to the second image as second image in your question---"
    "the students will only be given one image. Just call it an image.\n"
    "- Do not leak the problem-relevant information in your question statement, when it "
    "can be inferred from the image.\n"
    "- Answer in English.\n"
    "\n"
    "Only output the final hard problem of yours and nothing else. Your output should be "
    "formatted as: Final Problem: your hard problem."
)

SKILL_EXTRACTION_TEMPLATE = (
    "You are an expert AI researcher specializing in error analysis for Multimodal Large "
    "Language Models. Your task is to analyze specific failure modes in visual reasoning "
    "tasks by comparing teacher trajectories (reasoning that leads to the correct answer) "
    "against student trajectories (reasoning that leads to an incorrect answer).\n"
    "\n"
    "### Analysis Framework\n"
    "For the provided input, perform the following discriminative analysis:\n"
    "\n"
    "1. Compare Visual Attention: Where did the teacher look versus the student? Did the "
    "student miss a region entirely, or did they misinterpret what they saw?\n"
    "2. Compare Logic/Semantics: Did the student fail in reasoning despite seeing correctly? "
    "Check for arithmetic errors (e.g., adding numbers wrong), misunderstanding definitions "
    "(e.g., what counts as a \"car\"), wrong logical deductions (e.g., false implication, "
    "contradictions, or invalid spatial reasoning), or other logical fallacies.\n"
    "3. Compare Root Cause: Identify the core difficulty (e.g., occlusion, visual camouflage, "
    "saliency bias, arithmetic failure, logical fallacy).\n"
    "\n"
    "And then, finally,\n"
    "4. Extract Generalizable Skill: Generate a single phrase describing the abstract skill "
    "required based on the root cause and the core difficulty factor (e.g., changing \"missed "
    "the car behind the van\" to \"instance segmentation failure due to occlusion\").\n"
    "\n"
    "### Final Answer\n"
    "Please output the generalizable skill in a single phrase. Do not include any other text "
    "or comments.\n"
    "\n"
    "### Input Data\n"
    "\n"
    "Question:\n"
    "{question}\n"
    "\n"
    "Teacher Trajectory (Correct):\n"
    "{teacher_trajectory}\n"
    "\n"
    "Student Trajectory (Incorrect):\n"
    "{student_trajectory}"
)

JUDGE_GROUPING_TEMPLATE = (
    "Given a question and multiple student's answers to the question, group them into the "
    "groups of equivalent answers. The answers might be different in their surface forms but "
    "semantically equivalent. Do not attempt to solve the question or verify the correctness "
    "of the answers, just group them based on semantic equivalence. Your response should be "
    "in a json format where key is the answer (string) and the value is the list of students "
    "(string), formatted as:\n"
    "{{\n"
    "    \"answer 1\": [student generation indices corresponding to answer 1],\n"
    "    \"answer 2\": [student generation indices corresponding to answer 2],\n"
    "    ...\n"
    "}}\n"
    "\n"
    "Question:\n"
    "{question}\n"
    "\n"
    "Student Answers:\n"
    "{answers_str}\n"
    "\n"
    "Grouped Answers:"
)

ANSWER_FORMAT_INSTRUCTION = (
    "Think step by step, then end your response with Final Answer: [ANSWER]."
)
