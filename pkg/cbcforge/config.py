import os
from dotenv import load_dotenv

load_dotenv()

PROVER_BOUND = int(os.getenv("CBCFORGE_PROVER_BOUND", "4"))
PROVER_BOUND_OVERRIDE = os.getenv("CBCFORGE_PROVER_BOUND") is not None
SEQ_LEN = int(os.getenv("CBCFORGE_SEQ_LEN", "3"))
SEQ_ELEM_BOUND = int(os.getenv("CBCFORGE_SEQ_ELEM_BOUND", "2"))
FUEL = int(os.getenv("CBCFORGE_FUEL", "10000"))
WORKERS = int(os.getenv("CBCFORGE_WORKERS", "1"))
LOG_LEVEL = os.getenv("CBCFORGE_LOG_LEVEL", "INFO")
