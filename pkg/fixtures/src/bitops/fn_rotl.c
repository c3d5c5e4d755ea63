__int64 __fastcall fn_rotl(unsigned int a1, int a2)
{
  int v3; // [rsp+8h]

  v3 = a2 & 31;
  if ( !v3 )
    return a1;
  return (unsigned int)((a1 << v3) | (a1 >> (32 - v3)));
}
