from .labels import UNPARSED, extract_label, label_name
from .machine import (
    AwaitModel,
    ChatBackend,
    DemoAssessment,
    Finished,
    LearningPrefix,
    MCeFSMachine,
    ProtocolOutcome,
    SendUser,
    build_fewshot_conversation,
    drive,
    render_fewshot_prompt,
    run_fewshot,
    run_learning_phase,
    run_mcefs_test,
)
from .praise import PraisePool, elicit_praises, parse_praises, select_praise
from .templates import Templates, default_templates, fill, render_zero_shot
from .transcript import ChatTurn, Protocol, Role, Transcript, check_alternation, validate_transcript
